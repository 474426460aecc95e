"""Deterministic scripted backends for tests and offline runs.

A script file is a JSON document with three sections:

* ``generation``: image digest ("none" for text-only, "*" as fallback) ->
  prompt -> result. A result is either a flat ``{"text", "logprobs",
  "top_logprobs"?}`` object or a variants object ``{"default"?: result,
  "by_seed"?: {"<seed>": result}}`` so the same (image, prompt) can yield a
  different sample per request seed.
* ``entailment``: premise -> hypothesis -> ``{"forward", "backward"}``;
  lookups fall back to the swapped key with directions exchanged.
* ``structured``: a list of ``{"template_id", "inputs", "output"}`` entries
  (or ``"raw"``/``"raw_repair"`` strings to script malformed replies),
  indexed by the rendered prompt text.

All lookups are pure: identical inputs always produce identical outputs, and
anything unscripted raises ScriptMiss.
"""

from __future__ import annotations

import json
from pathlib import Path

from ..errors import ScriptMiss
from . import templates
from .base import EntailmentVerdict, GenerationRequest, GenerationResult, image_digest


def load_script(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _result_from_entry(entry: dict) -> GenerationResult:
    return GenerationResult.from_lists(
        entry["text"], entry["logprobs"], entry.get("top_logprobs")
    )


class ScriptedVlmBackend:
    """Pure lookup VLM: (image digest, prompt, seed) -> scripted result."""

    def __init__(self, script: dict):
        self._generation = script.get("generation", {})

    def generate(self, req: GenerationRequest) -> GenerationResult:
        digest = image_digest(req.image_png)
        entry = None
        for key in (digest, "*"):
            entry = self._generation.get(key, {}).get(req.prompt)
            if entry is not None:
                break
        if entry is None:
            raise ScriptMiss(f"no generation scripted for digest={digest} prompt={req.prompt!r}")
        if "text" in entry:
            return _result_from_entry(entry)
        by_seed = entry.get("by_seed", {})
        if req.seed is not None and str(req.seed) in by_seed:
            return _result_from_entry(by_seed[str(req.seed)])
        if "default" in entry:
            return _result_from_entry(entry["default"])
        raise ScriptMiss(
            f"no variant scripted for digest={digest} prompt={req.prompt!r} seed={req.seed}"
        )


class ScriptedNliBackend:
    """Pure lookup entailment judge over ordered (premise, hypothesis) pairs."""

    def __init__(self, script: dict):
        self._entailment = script.get("entailment", {})

    def check_entailment(self, premise: str, hypothesis: str) -> EntailmentVerdict:
        entry = self._entailment.get(premise, {}).get(hypothesis)
        if entry is not None:
            return EntailmentVerdict(bool(entry["forward"]), bool(entry["backward"]))
        swapped = self._entailment.get(hypothesis, {}).get(premise)
        if swapped is not None:
            return EntailmentVerdict(bool(swapped["backward"]), bool(swapped["forward"]))
        raise ScriptMiss(f"no entailment scripted for ({premise!r}, {hypothesis!r})")


class ScriptedLlmBackend:
    """Pure lookup LLM indexed by rendered prompt text.

    Entries are rendered through the real templates at construction, so the
    mock misses whenever a template or its inputs drift from the script.
    """

    def __init__(self, script: dict):
        self._by_prompt: dict[str, str] = {}
        for entry in script.get("structured", []):
            prompt = templates.render(entry["template_id"], entry["inputs"])
            raw = entry["raw"] if "raw" in entry else json.dumps(entry["output"])
            self._by_prompt[prompt] = raw
            repair = templates.repair_prompt(prompt)
            self._by_prompt[repair] = entry.get("raw_repair", raw)

    def complete_text(self, prompt: str) -> str:
        if prompt not in self._by_prompt:
            raise ScriptMiss(f"no structured output scripted for prompt {prompt[:120]!r}...")
        return self._by_prompt[prompt]
