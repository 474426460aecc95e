"""Pluggable model backends: OpenAI-compatible HTTP clients and scripted mocks."""

from .base import (
    BackendConfig,
    EntailmentVerdict,
    GenerationRequest,
    GenerationResult,
    LlmBackend,
    NliBackend,
    VlmBackend,
    encode_png,
    image_digest,
    llm_structured,
    semantically_equivalent,
    wrap_with_context,
)
from .http import HttpLlmBackend, HttpNliBackend, HttpVlmBackend, OpenAiChatClient
from .mock import (
    ScriptedLlmBackend,
    ScriptedNliBackend,
    ScriptedVlmBackend,
    load_script,
)
from .server import MockServer

__all__ = [
    "BackendConfig",
    "EntailmentVerdict",
    "GenerationRequest",
    "GenerationResult",
    "VlmBackend",
    "NliBackend",
    "LlmBackend",
    "encode_png",
    "image_digest",
    "wrap_with_context",
    "semantically_equivalent",
    "llm_structured",
    "OpenAiChatClient",
    "HttpVlmBackend",
    "HttpNliBackend",
    "HttpLlmBackend",
    "ScriptedVlmBackend",
    "ScriptedNliBackend",
    "ScriptedLlmBackend",
    "load_script",
    "MockServer",
]
