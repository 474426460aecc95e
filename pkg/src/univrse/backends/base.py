"""Backend-neutral types and the operations shared by all backend kinds.

Three capabilities sit behind small protocols: sampled generation from a
vision-language model, directional entailment from an NLI judge, and
structured JSON tasks from a general LLM. HTTP implementations live in
``http.py``, deterministic scripted mocks in ``mock.py``.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import jsonschema
import numpy as np
from PIL import Image

from ..errors import InvalidConfig, SchemaViolation
from ..perturb import ImageTensor
from . import templates

__all__ = [
    "GenerationRequest",
    "GenerationResult",
    "EntailmentVerdict",
    "BackendConfig",
    "VlmBackend",
    "NliBackend",
    "LlmBackend",
    "encode_png",
    "image_digest",
    "wrap_with_context",
    "semantically_equivalent",
    "llm_structured",
]


@dataclass(frozen=True)
class GenerationRequest:
    """One sampled-generation call; ``seed`` rides the wire for reproducible servers."""

    prompt: str
    image_png: bytes | None = None
    temperature: float = 1.0
    max_tokens: int = 256
    top_logprobs: int = 20
    seed: int | None = None

    def __post_init__(self):
        if self.temperature <= 0:
            raise InvalidConfig("temperature must be > 0")
        if self.max_tokens < 1:
            raise InvalidConfig("max_tokens must be >= 1")
        if self.top_logprobs < 1:
            raise InvalidConfig("top_logprobs must be >= 1")


@dataclass(frozen=True)
class GenerationResult:
    """Generated text plus, per token, (chosen logprob, top-k logprobs desc)."""

    text: str
    token_logprobs: tuple[tuple[float, tuple[float, ...]], ...]

    def __post_init__(self):
        for chosen, top in self.token_logprobs:
            if chosen > 0 or any(lp > 0 for lp in top):
                raise InvalidConfig("logprobs must be <= 0")
            if list(top) != sorted(top, reverse=True):
                raise InvalidConfig("top-k logprobs must be sorted descending")

    @property
    def chosen_logprobs(self) -> list[float]:
        return [chosen for chosen, _ in self.token_logprobs]

    @property
    def top_lists(self) -> list[list[float]]:
        return [list(top) for _, top in self.token_logprobs]

    @staticmethod
    def from_lists(text: str, logprobs, top_logprobs=None) -> "GenerationResult":
        if top_logprobs is None:
            top_logprobs = [[lp] for lp in logprobs]
        if len(top_logprobs) != len(logprobs):
            raise InvalidConfig("top_logprobs must align with logprobs")
        pairs = tuple(
            (float(lp), tuple(float(t) for t in top))
            for lp, top in zip(logprobs, top_logprobs)
        )
        return GenerationResult(text=text, token_logprobs=pairs)


@dataclass(frozen=True)
class EntailmentVerdict:
    forward: bool   # premise entails hypothesis
    backward: bool  # hypothesis entails premise


@dataclass(frozen=True)
class BackendConfig:
    endpoint: str
    model: str
    auth_env: str = ""      # name of the env var holding the key; never logged
    timeout: float = 30.0
    max_retries: int = 3
    parallelism: int = 4

    def __post_init__(self):
        if self.timeout <= 0:
            raise InvalidConfig("timeout must be > 0")
        if self.parallelism < 1:
            raise InvalidConfig("parallelism must be >= 1")
        if self.max_retries < 0:
            raise InvalidConfig("max_retries must be >= 0")


@runtime_checkable
class VlmBackend(Protocol):
    def generate(self, req: GenerationRequest) -> GenerationResult: ...


@runtime_checkable
class NliBackend(Protocol):
    def check_entailment(self, premise: str, hypothesis: str) -> EntailmentVerdict: ...


@runtime_checkable
class LlmBackend(Protocol):
    def complete_text(self, prompt: str) -> str: ...


def encode_png(img: ImageTensor) -> bytes:
    """Re-encode an image tensor as PNG bytes for transmission."""
    arr = np.clip(np.rint(img.pixels * 255.0), 0, 255).astype(np.uint8)
    if arr.shape[2] == 1:
        pil = Image.fromarray(arr[:, :, 0], mode="L")
    else:
        pil = Image.fromarray(arr, mode="RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def image_digest(png_bytes: bytes | None) -> str:
    """SHA-256 hex of the PNG bytes, or "none" for text-only requests."""
    if png_bytes is None:
        return "none"
    return hashlib.sha256(png_bytes).hexdigest()


def wrap_with_context(text: str, context: str) -> str:
    """Make short answers interpretable by prepending the question they answer."""
    if context:
        return f"Question: {context} Answer: {text}"
    return text


def semantically_equivalent(nli: NliBackend, a: str, b: str, context: str = "") -> bool:
    """True iff the two texts mutually entail each other, given the context.

    Identical wrapped strings short-circuit to True without a backend call;
    an empty text is never equivalent to a nonempty one. Symmetric in (a, b)
    by construction.
    """
    wa = wrap_with_context(a.strip(), context)
    wb = wrap_with_context(b.strip(), context)
    if wa == wb:
        return True
    if not a.strip() or not b.strip():
        return False
    verdict = nli.check_entailment(wa, wb)
    return verdict.forward and verdict.backward


def llm_structured(llm: LlmBackend, template_id: str, inputs: dict[str, str]):
    """Run a structured template task and return schema-validated JSON.

    One repair retry is attempted when the first reply fails to parse or
    validate; a second failure raises SchemaViolation.
    """
    for key, value in inputs.items():
        if not value.strip():
            raise SchemaViolation(f"empty input: {key!r}")
    prompt = templates.render(template_id, inputs)
    schema = templates.schema_for(template_id)

    raw = llm.complete_text(prompt)
    try:
        return _parse_and_validate(raw, schema)
    except SchemaViolation as first_error:
        raw = llm.complete_text(templates.repair_prompt(prompt))
        try:
            return _parse_and_validate(raw, schema)
        except SchemaViolation as second_error:
            raise SchemaViolation(
                f"template {template_id!r}: output invalid after repair retry: "
                f"{second_error} (first failure: {first_error})"
            ) from second_error


def _parse_and_validate(raw: str, schema: dict):
    text = _strip_code_fence(raw)
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(value, schema)
    except jsonschema.ValidationError as exc:
        raise SchemaViolation(f"schema validation failed: {exc.message}") from exc
    return value


def _strip_code_fence(raw: str) -> str:
    text = raw.strip()
    if text.startswith("```"):
        lines = text.splitlines()
        if lines[0].startswith("```"):
            lines = lines[1:]
        if lines and lines[-1].strip() == "```":
            lines = lines[:-1]
        text = "\n".join(lines)
    return text
