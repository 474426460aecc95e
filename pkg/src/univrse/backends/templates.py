"""Versioned prompt templates for structured LLM tasks.

Templates ship as text resources with ``{placeholder}`` slots. The registry
maps template ids to a file, its SHA-256 (verified at load so silent edits
cannot change run semantics), the placeholder names, and the JSON schema the
LLM output must satisfy.
"""

from __future__ import annotations

import hashlib
import json
from functools import lru_cache
from importlib import resources

from ..errors import ConfigError, InvalidConfig

_RESOURCE_PKG = "univrse.backends.prompts"

REPAIR_PREFIX = (
    "Your previous reply was not valid JSON for the required schema. "
    "Reply again with only the requested JSON and no other text.\n\n"
)


def _read_resource(name: str) -> str:
    return resources.files(_RESOURCE_PKG).joinpath(name).read_text(encoding="utf-8")


@lru_cache(maxsize=1)
def load_registry() -> dict:
    """Load the template registry and verify every file hash."""
    registry = json.loads(_read_resource("registry.json"))
    for template_id, entry in registry.items():
        body = _read_resource(entry["path"])
        digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
        if digest != entry["sha256"]:
            raise ConfigError(
                f"template {template_id!r}: file hash {digest} does not match "
                f"registry hash {entry['sha256']}"
            )
        entry["_body"] = body
    return registry


def template_ids() -> list[str]:
    return sorted(load_registry())


def template_hash(template_id: str) -> str:
    return _entry(template_id)["sha256"]


def template_hashes() -> dict[str, str]:
    return {tid: template_hash(tid) for tid in template_ids()}


def schema_for(template_id: str) -> dict:
    return _entry(template_id)["schema"]


def _entry(template_id: str) -> dict:
    registry = load_registry()
    if template_id not in registry:
        raise InvalidConfig(f"unknown template id {template_id!r}")
    return registry[template_id]


def render(template_id: str, inputs: dict[str, str]) -> str:
    """Fill a template's placeholders; all declared placeholders are required."""
    entry = _entry(template_id)
    missing = [p for p in entry["placeholders"] if p not in inputs]
    if missing:
        raise InvalidConfig(f"template {template_id!r}: missing inputs {missing}")
    text = entry["_body"]
    for key, value in inputs.items():
        text = text.replace("{" + key + "}", value)
    return text


def repair_prompt(original_prompt: str) -> str:
    return REPAIR_PREFIX + original_prompt
