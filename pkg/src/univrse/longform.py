"""Report-level detection by per-claim verification.

A generated report is decomposed into atomic claims, each claim is turned
into a verification question whose expected answer is the claim itself, and
every (image, question) pair is scored by the vision-contrast pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .backends.base import (
    GenerationRequest,
    LlmBackend,
    NliBackend,
    VlmBackend,
    encode_png,
    llm_structured,
)
from .errors import BackendError, EmptyReport, UnivrseError
from .perturb import ImageTensor
from .rng import LANE_DEPLOY, derive_seed
from .semantic import GenSample
from .vcse import VseConfig, VseOutcome, VseScore, run_contrast_pipeline

__all__ = [
    "AtomicClaim",
    "ClaimVerificationItem",
    "ReportScoring",
    "claim_key",
    "decompose_report",
    "generate_verification_question",
    "score_report",
]


def claim_key(record_key: str, claim_text: str) -> str:
    """Seed-lane key for one claim's verification subtask.

    Keyed by claim text, not list position, so permuting the decomposition
    order permutes the scores with the claims instead of reshuffling seeds.
    """
    return f"{record_key}/claim:{claim_text}"


@dataclass(frozen=True)
class AtomicClaim:
    index: int
    text: str
    source_span: tuple[int, int] | None = None


@dataclass
class ClaimVerificationItem:
    claim: AtomicClaim
    question: str
    vse: VseScore | None = None
    detail: VseOutcome | None = None
    error: str | None = None


@dataclass
class ReportScoring:
    report: str
    deploy_sample: GenSample
    items: list[ClaimVerificationItem]


def decompose_report(report: str, llm: LlmBackend) -> list[AtomicClaim]:
    """Split a report into ordered, self-contained atomic claims."""
    if not report.strip():
        raise EmptyReport("report contains no text")
    texts = llm_structured(llm, "claim_decomposition", {"text": report})
    if not texts:
        raise EmptyReport("report contains no assertions")
    lowered = report.lower()
    claims = []
    for idx, text in enumerate(texts):
        start = lowered.find(text.lower())
        span = (start, start + len(text)) if start >= 0 else None
        claims.append(AtomicClaim(index=idx, text=text, source_span=span))
    return claims


def generate_verification_question(claim: AtomicClaim, llm: LlmBackend) -> str:
    """A question answerable from the image whose correct answer is the claim."""
    return llm_structured(llm, "verification_question", {"claim": claim.text})


def score_report(
    image: ImageTensor,
    instruction: str,
    vlm: VlmBackend,
    nli: NliBackend,
    llm: LlmBackend,
    cfg: VseConfig,
    *,
    deploy_temperature: float = 0.1,
) -> ReportScoring:
    """Generate the audited report, then score every claim independently.

    A claim whose verification fails is kept with an error marker so the
    remaining claims still produce results.
    """
    deploy_seed = derive_seed(cfg.run_seed, cfg.record_key, LANE_DEPLOY)
    result = vlm.generate(
        GenerationRequest(
            prompt=instruction,
            image_png=encode_png(image),
            temperature=deploy_temperature,
            max_tokens=cfg.sampling.max_tokens,
            top_logprobs=cfg.sampling.top_logprobs,
            seed=deploy_seed,
        )
    )
    if not result.text.strip():
        raise EmptyReport("model returned an empty report")
    deploy_sample = GenSample.from_result(result, deploy_seed)

    claims = decompose_report(result.text, llm)
    items: list[ClaimVerificationItem] = []
    for claim in claims:
        # Each claim becomes an independent verification instance with its
        # own seed lane, so claim order cannot influence any score.
        claim_cfg = replace(cfg, record_key=claim_key(cfg.record_key, claim.text))
        try:
            question = generate_verification_question(claim, llm)
            outcome = run_contrast_pipeline(image, question, claim_cfg, vlm, nli)
            items.append(
                ClaimVerificationItem(
                    claim=claim, question=question,
                    vse=outcome.score, detail=outcome,
                )
            )
        except (BackendError, UnivrseError) as exc:
            items.append(
                ClaimVerificationItem(
                    claim=claim, question="", error=f"{type(exc).__name__}: {exc}"
                )
            )
    return ReportScoring(report=result.text, deploy_sample=deploy_sample, items=items)
