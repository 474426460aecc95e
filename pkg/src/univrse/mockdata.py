"""Synthetic scripted scenarios for demos and integration tests.

Everything here drives the real pipeline end to end: image digests, sample
seeds, and rendered prompts are computed with the same functions the runner
uses, so the scripts line up with what the backends will actually be asked.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .backends.base import encode_png, image_digest, wrap_with_context
from .backends.mock import ScriptedNliBackend, ScriptedVlmBackend
from .longform import claim_key
from .perturb import DistortionConfig, ImageTensor, WeakTransformConfig, apply_distortion, load_image
from .rng import (
    LANE_DEPLOY,
    LANE_DISTORTED,
    LANE_DISTORTION,
    LANE_ORIGINAL,
    branch_seeds,
    derive_seed,
)
from .semantic import SamplingConfig
from .vcse import VseConfig

__all__ = [
    "ScriptBuilder",
    "build_contrast_scenario",
    "write_vqa_fixture",
    "write_vrg_fixture",
    "FIXTURE_ROLES",
]


class ScriptBuilder:
    """Accumulates mock script entries and serializes them to one JSON file."""

    def __init__(self):
        self._generation: dict = {}
        self._entailment: dict = {}
        self._structured: list = []

    def add_generation(self, digest: str, prompt: str, seed: int | None,
                       text: str, logprobs, top_logprobs=None) -> None:
        entry = {"text": text, "logprobs": list(logprobs)}
        if top_logprobs is not None:
            entry["top_logprobs"] = [list(t) for t in top_logprobs]
        slot = self._generation.setdefault(digest, {}).setdefault(prompt, {})
        if seed is None:
            slot["default"] = entry
        else:
            slot.setdefault("by_seed", {})[str(seed)] = entry

    def add_entailment(self, premise: str, hypothesis: str,
                       forward: bool, backward: bool) -> None:
        self._entailment.setdefault(premise, {})[hypothesis] = {
            "forward": forward, "backward": backward,
        }

    def add_structured(self, template_id: str, inputs: dict, output) -> None:
        self._structured.append(
            {"template_id": template_id, "inputs": inputs, "output": output}
        )

    def add_structured_raw(self, template_id: str, inputs: dict,
                           raw: str, raw_repair: str | None = None) -> None:
        entry = {"template_id": template_id, "inputs": inputs, "raw": raw}
        if raw_repair is not None:
            entry["raw_repair"] = raw_repair
        self._structured.append(entry)

    def to_dict(self) -> dict:
        return {
            "generation": self._generation,
            "entailment": self._entailment,
            "structured": self._structured,
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")
        return path


def _gradient_image(size: int = 12, offset: int = 0) -> ImageTensor:
    base = np.linspace(0.15, 0.85, size * size).reshape(size, size)
    shifted = np.roll(base, offset, axis=1)
    return ImageTensor(shifted[:, :, np.newaxis])


def build_contrast_scenario(kind: str, *, run_seed: int = 5, record_key: str = "scenario"):
    """In-memory scripted setup for the closed-form contrast traces.

    Kinds: "prior_single" (one class, answers never move), "prior_two"
    (dominant class plus a zero-mass dissenter, unchanged by distortion) and
    "grounded" (the dominant answer flips when the image is degraded).
    Returns (image, question, cfg, vlm, nli).
    """
    question = "What does the scan show?"
    image = _gradient_image()
    cfg = VseConfig(
        sampling=SamplingConfig(m_samples=2, temperature=1.0),
        weak=WeakTransformConfig(enabled=False),
        distortion=DistortionConfig.preset("noise3"),
        lam=1.0,
        run_seed=run_seed,
        record_key=record_key,
    )
    orig_digest = image_digest(encode_png(image))
    distortion_seed = derive_seed(run_seed, record_key, LANE_DISTORTION)
    distorted = apply_distortion(image, cfg.distortion, distortion_seed)
    dist_digest = image_digest(encode_png(distorted))
    orig_seeds = branch_seeds(run_seed, record_key, LANE_ORIGINAL, 2)
    dist_seeds = branch_seeds(run_seed, record_key, LANE_DISTORTED, 2)

    alpha, beta = "a small nodule", "no abnormality"
    sb = ScriptBuilder()
    # -1000 underflows to probability exactly 0, pinning the SPD at (1, 0)
    if kind == "prior_single":
        for digest, seeds in ((orig_digest, orig_seeds), (dist_digest, dist_seeds)):
            for seed in seeds:
                sb.add_generation(digest, question, seed, alpha, [-0.1])
    elif kind == "prior_two":
        for digest, seeds in ((orig_digest, orig_seeds), (dist_digest, dist_seeds)):
            sb.add_generation(digest, question, seeds[0], alpha, [-0.1])
            sb.add_generation(digest, question, seeds[1], beta, [-1000.0])
    elif kind == "grounded":
        sb.add_generation(orig_digest, question, orig_seeds[0], alpha, [-0.1])
        sb.add_generation(orig_digest, question, orig_seeds[1], beta, [-1000.0])
        sb.add_generation(dist_digest, question, dist_seeds[0], alpha, [-1000.0])
        sb.add_generation(dist_digest, question, dist_seeds[1], beta, [-0.1])
    else:
        raise ValueError(f"unknown scenario kind {kind!r}")
    sb.add_entailment(
        wrap_with_context(alpha, question), wrap_with_context(beta, question),
        forward=False, backward=False,
    )
    script = sb.to_dict()
    return image, question, cfg, ScriptedVlmBackend(script), ScriptedNliBackend(script)


# record id -> (correct answer?, branch behavior)
FIXTURE_ROLES = {
    "r00": ("correct", "confident_flip"),
    "r01": ("correct", "confident_flip"),
    "r02": ("correct", "confident_flip"),
    "r03": ("correct", "crisp_flip"),
    "r04": ("correct", "crisp_flip"),
    "r05": ("hallucinated", "inconsistent"),
    "r06": ("hallucinated", "inconsistent"),
    "r07": ("hallucinated", "overconfident"),
    "r08": ("hallucinated", "overconfident"),
    "r09": ("hallucinated", "overconfident"),
}


@dataclass
class VqaFixture:
    root: Path
    dataset_path: Path
    script_path: Path
    config_path: Path
    run_seed: int
    m_samples: int


def write_vqa_fixture(root, *, run_seed: int = 77, m_samples: int = 4,
                      workers: int = 2) -> VqaFixture:
    """Materialize the ten-record scripted VQA dataset.

    Five records answer correctly; five hallucinate. Among the hallucinated
    ones, three are "overconfident": their sampled answers do not move when
    the image is distorted, which plain semantic entropy cannot distinguish
    from the equally confident correct records.
    """
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    sampling = SamplingConfig(m_samples=m_samples, temperature=1.0)
    distortion = DistortionConfig.preset("noise3")

    sb = ScriptBuilder()
    dataset_lines = []

    for idx, (rid, (correctness, behavior)) in enumerate(sorted(FIXTURE_ROLES.items())):
        question = f"What does region {idx} of the scan show?"
        alpha = f"an opacity in region {idx}"
        beta = f"region {idx} is clear"
        reference = beta if correctness == "hallucinated" else alpha
        response = alpha  # the audited low-temperature answer

        image = _gradient_image(offset=idx)
        image_path = root / "images" / f"{rid}.png"
        arr = np.clip(np.rint(image.pixels[:, :, 0] * 255), 0, 255).astype(np.uint8)
        Image.fromarray(arr, mode="L").save(image_path)

        loaded = load_image(image_path)
        orig_digest = image_digest(encode_png(loaded))
        distortion_seed = derive_seed(run_seed, rid, LANE_DISTORTION)
        dist_digest = image_digest(
            encode_png(apply_distortion(loaded, distortion, distortion_seed))
        )
        orig_seeds = branch_seeds(run_seed, rid, LANE_ORIGINAL, m_samples)
        dist_seeds = branch_seeds(run_seed, rid, LANE_DISTORTED, m_samples)
        deploy_seed = derive_seed(run_seed, rid, LANE_DEPLOY)

        def branch(texts_with_lp, digest, seeds):
            for seed, (text, lp) in zip(seeds, texts_with_lp):
                sb.add_generation(digest, question, seed, text, [lp])

        confident = [(alpha, -0.1)] * (m_samples - 1) + [(beta, -3.0)]
        confident_flipped = [(beta, -0.1)] * (m_samples - 1) + [(alpha, -3.0)]
        crisp, crisp_flipped = [(alpha, -0.1)] * m_samples, [(beta, -0.1)] * m_samples
        half = m_samples // 2
        spread = [(alpha, -0.5)] * half + [(beta, -0.5)] * (m_samples - half)
        # Marginally sharper than `confident`: plain semantic entropy reads
        # these hallucinated records as the most trustworthy of all.
        overconfident = [(alpha, -0.05)] * (m_samples - 1) + [(beta, -3.0)]

        if behavior == "confident_flip":
            branch(confident, orig_digest, orig_seeds)
            branch(confident_flipped, dist_digest, dist_seeds)
        elif behavior == "crisp_flip":
            branch(crisp, orig_digest, orig_seeds)
            branch(crisp_flipped, dist_digest, dist_seeds)
        elif behavior == "inconsistent":
            branch(spread, orig_digest, orig_seeds)
            branch(spread, dist_digest, dist_seeds)
        else:  # overconfident: answers do not move under distortion
            branch(overconfident, orig_digest, orig_seeds)
            branch(overconfident, dist_digest, dist_seeds)

        # The audited deployment answer; token stats deliberately carry no
        # signal about correctness.
        lp0 = -0.04 * ((idx * 3) % 7 + 1)
        sb.add_generation(
            orig_digest, question, deploy_seed, response,
            [lp0, -0.2], [[lp0, lp0 - 0.9], [-0.2, -1.8]],
        )

        sb.add_entailment(
            wrap_with_context(alpha, question), wrap_with_context(beta, question),
            forward=False, backward=False,
        )

        claim = f"there is an opacity in region {idx}"
        fact = (f"region {idx} contains an opacity" if correctness == "correct"
                else f"region {idx} is clear of findings")
        sb.add_structured("claim_decomposition", {"text": response}, [claim])
        sb.add_structured(
            "reference_decomposition",
            {"instruction": question, "reference": reference},
            [{"text": fact, "kind": "instruction-answering"}],
        )
        verdict = ({"verdict": "matched", "fact_index": 0}
                   if correctness == "correct"
                   else {"verdict": "hallucinated", "fact_index": None})
        sb.add_structured(
            "fact_matching",
            {
                "instruction": question,
                "claims_json": json.dumps([claim]),
                "facts_json": json.dumps([{"text": fact, "kind": "instruction-answering"}]),
            },
            [verdict],
        )

        dataset_lines.append(json.dumps({
            "id": rid,
            "image_path": f"images/{rid}.png",
            "task": "vqa",
            "question": question,
            "reference": reference,
        }))

    dataset_path = root / "dataset.jsonl"
    dataset_path.write_text("\n".join(dataset_lines) + "\n", encoding="utf-8")
    script_path = sb.save(root / "script.json")

    config_path = root / "config.toml"
    config_path.write_text(
        "\n".join([
            f"seed = {run_seed}",
            f"m_samples = {m_samples}",
            "temperature = 1.0",
            "deploy_temperature = 0.1",
            "lambda = 1.0",
            "weak_enabled = false",
            'distortion_preset = "noise3"',
            f"workers = {workers}",
            'dataset_name = "mockvqa"',
            "",
            "[backends.vlm]",
            'kind = "mock"',
            f'script = "{script_path}"',
            "",
            "[backends.nli]",
            'kind = "mock"',
            f'script = "{script_path}"',
            "",
            "[backends.llm]",
            'kind = "mock"',
            f'script = "{script_path}"',
        ]) + "\n",
        encoding="utf-8",
    )
    return VqaFixture(
        root=root, dataset_path=dataset_path, script_path=script_path,
        config_path=config_path, run_seed=run_seed, m_samples=m_samples,
    )


def _write_mock_config(root: Path, script_path: Path, *, run_seed: int,
                       m_samples: int, workers: int, name: str) -> Path:
    config_path = root / "config.toml"
    lines = [
        f"seed = {run_seed}",
        f"m_samples = {m_samples}",
        "weak_enabled = false",
        f"workers = {workers}",
        f'dataset_name = "{name}"',
        "",
    ]
    for role in ("vlm", "nli", "llm"):
        lines += [f"[backends.{role}]", 'kind = "mock"', f'script = "{script_path}"', ""]
    config_path.write_text("\n".join(lines), encoding="utf-8")
    return config_path


def write_vrg_fixture(root, *, run_seed: int = 31, m_samples: int = 2,
                      workers: int = 1) -> VqaFixture:
    """Two scripted report-generation records, two claims each.

    In every report one claim is visually grounded (its verification answers
    flip under distortion) and the other is prior-driven; the prior-driven
    claims are the ones judged hallucinated against the reference.
    """
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    distortion = DistortionConfig.preset("noise3")
    sb = ScriptBuilder()
    dataset_lines = []

    for ridx in range(2):
        rid = f"v{ridx:02d}"
        instruction = f"Describe study {ridx}."
        reference = f"Study {ridx} shows a stable device. No new finding."
        report = f"Report {ridx}: device present. New mass seen."
        claims = [f"a device is present in study {ridx}",
                  f"a new mass is seen in study {ridx}"]
        # claim 0 grounded+matched, claim 1 prior-driven+hallucinated
        behaviors = ["grounded", "prior"]
        verdicts = [
            {"verdict": "matched", "fact_index": 0},
            {"verdict": "hallucinated", "fact_index": None},
        ]
        facts = [
            {"text": f"study {ridx} shows a stable device", "kind": "instruction-answering"},
            {"text": f"study {ridx} has no new finding", "kind": "instruction-answering"},
        ]

        image = _gradient_image(offset=ridx + 3)
        image_path = root / "images" / f"{rid}.png"
        arr = np.clip(np.rint(image.pixels[:, :, 0] * 255), 0, 255).astype(np.uint8)
        Image.fromarray(arr, mode="L").save(image_path)
        loaded = load_image(image_path)
        orig_digest = image_digest(encode_png(loaded))

        deploy_seed = derive_seed(run_seed, rid, LANE_DEPLOY)
        sb.add_generation(orig_digest, instruction, deploy_seed, report, [-0.3, -0.4])
        sb.add_structured("claim_decomposition", {"text": report}, claims)
        sb.add_structured(
            "reference_decomposition",
            {"instruction": instruction, "reference": reference}, facts,
        )
        sb.add_structured(
            "fact_matching",
            {
                "instruction": instruction,
                "claims_json": json.dumps(claims),
                "facts_json": json.dumps(facts),
            },
            verdicts,
        )

        for cidx, (claim, behavior) in enumerate(zip(claims, behaviors)):
            question = f"Verification {ridx}.{cidx}?"
            sb.add_structured("verification_question", {"claim": claim}, question)
            key = claim_key(rid, claim)
            dist_seed = derive_seed(run_seed, key, LANE_DISTORTION)
            dist_digest = image_digest(
                encode_png(apply_distortion(loaded, distortion, dist_seed))
            )
            orig_seeds = branch_seeds(run_seed, key, LANE_ORIGINAL, m_samples)
            dist_seeds = branch_seeds(run_seed, key, LANE_DISTORTED, m_samples)
            claim_deploy = derive_seed(run_seed, key, LANE_DEPLOY)
            alpha, beta = f"verified {ridx}.{cidx}", f"denied {ridx}.{cidx}"

            sb.add_generation(orig_digest, question, claim_deploy, alpha,
                              [-0.2], [[-0.2, -1.7]])
            sb.add_generation(orig_digest, question, orig_seeds[0], alpha, [-0.1])
            sb.add_generation(orig_digest, question, orig_seeds[1], beta, [-1000.0])
            if behavior == "prior":
                sb.add_generation(dist_digest, question, dist_seeds[0], alpha, [-0.1])
                sb.add_generation(dist_digest, question, dist_seeds[1], beta, [-1000.0])
            else:
                sb.add_generation(dist_digest, question, dist_seeds[0], alpha, [-1000.0])
                sb.add_generation(dist_digest, question, dist_seeds[1], beta, [-0.1])

            wa, wb = wrap_with_context(alpha, question), wrap_with_context(beta, question)
            wc = wrap_with_context(claim, question)
            sb.add_entailment(wa, wb, False, False)
            # RadFlag audits the claim against the sampled answers
            grounded = behavior == "grounded"
            sb.add_entailment(wc, wa, grounded, grounded)
            sb.add_entailment(wc, wb, False, False)

        dataset_lines.append(json.dumps({
            "id": rid, "image_path": f"images/{rid}.png", "task": "vrg",
            "question": instruction, "reference": reference,
        }))

    dataset_path = root / "dataset.jsonl"
    dataset_path.write_text("\n".join(dataset_lines) + "\n", encoding="utf-8")
    script_path = sb.save(root / "script.json")
    config_path = _write_mock_config(
        root, script_path, run_seed=run_seed, m_samples=m_samples,
        workers=workers, name="mockvrg",
    )
    return VqaFixture(
        root=root, dataset_path=dataset_path, script_path=script_path,
        config_path=config_path, run_seed=run_seed, m_samples=m_samples,
    )
