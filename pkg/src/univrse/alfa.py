"""Hallucination labels by atomic-fact alignment.

The audited response and the reference answer are both decomposed into
atomic units; every response claim is judged matched, hallucinated, or
extraneous against the reference facts, and the three ratios form the label.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

from .backends.base import (
    GenerationRequest,
    LlmBackend,
    VlmBackend,
    encode_png,
    llm_structured,
)
from .errors import (
    EmptyJudgments,
    EmptyReference,
    EmptyReport,
    EmptyResponse,
    InvalidConfig,
    SchemaViolation,
)
from .longform import AtomicClaim, decompose_report
from .perturb import ImageTensor
from .rng import LANE_DEPLOY, derive_seed
from .semantic import GenSample

__all__ = [
    "INSTRUCTION_ANSWERING",
    "CONTEXTUAL",
    "AtomicFact",
    "ClaimJudgment",
    "AlfaLabel",
    "AlfaOutcome",
    "decompose_reference",
    "match_claims",
    "compute_alfa",
    "label_sample",
]

INSTRUCTION_ANSWERING = "instruction-answering"
CONTEXTUAL = "contextual"

MATCHED = "matched"
HALLUCINATED = "hallucinated"
EXTRANEOUS = "extraneous"


@dataclass(frozen=True)
class AtomicFact:
    text: str
    kind: str

    def __post_init__(self):
        if not self.text:
            raise InvalidConfig("fact text must be nonempty")
        if self.kind not in (INSTRUCTION_ANSWERING, CONTEXTUAL):
            raise InvalidConfig(f"unknown fact kind {self.kind!r}")


@dataclass(frozen=True)
class ClaimJudgment:
    claim: str
    verdict: str
    matched_fact_index: int | None = None

    def __post_init__(self):
        if self.verdict not in (MATCHED, HALLUCINATED, EXTRANEOUS):
            raise InvalidConfig(f"unknown verdict {self.verdict!r}")
        if (self.matched_fact_index is not None) != (self.verdict == MATCHED):
            raise InvalidConfig("matched_fact_index present iff verdict is matched")


@dataclass(frozen=True)
class AlfaLabel:
    n2: int
    m: int
    h: int
    e: int
    alpha_m: float
    alpha_h: float
    alpha_e: float

    def __post_init__(self):
        if self.n2 < 1 or min(self.m, self.h, self.e) < 0:
            raise InvalidConfig("counts must be nonnegative with n2 >= 1")
        if self.m + self.h + self.e != self.n2:
            raise InvalidConfig("counts must sum to n2")

    @classmethod
    def from_counts(cls, m: int, h: int, e: int) -> "AlfaLabel":
        n2 = m + h + e
        if n2 < 1:
            raise EmptyJudgments("need at least one judged claim")
        # exact-ratio arithmetic, rendered to floats at the end
        return cls(
            n2=n2, m=m, h=h, e=e,
            alpha_m=float(Fraction(m, n2)),
            alpha_h=float(Fraction(h, n2)),
            alpha_e=float(Fraction(e, n2)),
        )


def decompose_reference(
    reference: str, instruction: str, llm: LlmBackend
) -> list[AtomicFact]:
    """Split the reference answer into tagged atomic facts."""
    if not reference.strip():
        raise EmptyReference("reference contains no text")
    raw = llm_structured(
        llm,
        "reference_decomposition",
        {"instruction": instruction, "reference": reference},
    )
    if not raw:
        raise EmptyReference("reference decomposition produced no facts")
    return [AtomicFact(text=f["text"], kind=f["kind"]) for f in raw]


def match_claims(
    claims: list[str],
    facts: list[AtomicFact],
    llm: LlmBackend,
    *,
    instruction: str,
) -> list[ClaimJudgment]:
    """Judge every claim against the reference facts; one verdict per claim."""
    if not claims:
        raise EmptyJudgments("no claims to match")
    raw = llm_structured(
        llm,
        "fact_matching",
        {
            "instruction": instruction,
            "claims_json": json.dumps(claims),
            "facts_json": json.dumps([{"text": f.text, "kind": f.kind} for f in facts]),
        },
    )
    if len(raw) != len(claims):
        raise SchemaViolation(
            f"matching returned {len(raw)} verdicts for {len(claims)} claims"
        )
    judgments = []
    for claim, item in zip(claims, raw):
        verdict = item["verdict"]
        fact_index = item.get("fact_index")
        if verdict == MATCHED:
            if fact_index is None or not (0 <= fact_index < len(facts)):
                raise SchemaViolation(f"matched claim needs a valid fact_index, got {fact_index}")
        else:
            fact_index = None
        judgments.append(
            ClaimJudgment(claim=claim, verdict=verdict, matched_fact_index=fact_index)
        )
    return judgments


def compute_alfa(judgments: list[ClaimJudgment]) -> AlfaLabel:
    if not judgments:
        raise EmptyJudgments("no judgments")
    m = sum(1 for j in judgments if j.verdict == MATCHED)
    h = sum(1 for j in judgments if j.verdict == HALLUCINATED)
    e = sum(1 for j in judgments if j.verdict == EXTRANEOUS)
    return AlfaLabel.from_counts(m, h, e)


@dataclass
class AlfaOutcome:
    """The label plus every intermediate worth persisting."""

    response: str
    deploy_sample: GenSample
    claims: list[AtomicClaim]
    facts: list[AtomicFact]
    judgments: list[ClaimJudgment]
    label: AlfaLabel
    deploy_seed: int


def label_sample(
    image: ImageTensor,
    question: str,
    reference: str,
    vlm: VlmBackend,
    llm: LlmBackend,
    *,
    run_seed: int,
    record_key: str,
    temperature: float = 0.1,
    max_tokens: int = 256,
    top_logprobs: int = 20,
) -> AlfaOutcome:
    """Label one sample: low-temperature response, dual decomposition, matching."""
    deploy_seed = derive_seed(run_seed, record_key, LANE_DEPLOY)
    result = vlm.generate(
        GenerationRequest(
            prompt=question,
            image_png=encode_png(image),
            temperature=temperature,
            max_tokens=max_tokens,
            top_logprobs=top_logprobs,
            seed=deploy_seed,
        )
    )
    if not result.text.strip():
        raise EmptyResponse("model returned an empty response")
    try:
        claims = decompose_report(result.text, llm)
    except EmptyReport as exc:
        raise EmptyResponse(f"response has no assertive content: {exc}") from exc
    facts = decompose_reference(reference, question, llm)
    judgments = match_claims(
        [c.text for c in claims], facts, llm, instruction=question
    )
    return AlfaOutcome(
        response=result.text,
        deploy_sample=GenSample.from_result(result, deploy_seed),
        claims=claims,
        facts=facts,
        judgments=judgments,
        label=compute_alfa(judgments),
        deploy_seed=deploy_seed,
    )
