"""Comparison detectors sharing the sampling and clustering machinery.

Token statistics come from the audited low-temperature response; SE,
RadFlag, and the contrast score all reuse the same cached branch samples so
no method pays for extra backend calls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .backends.base import NliBackend, VlmBackend, semantically_equivalent
from .errors import EmptySequence, InvalidConfig, MissingTopK, NoAuxiliaryBackend
from .perturb import ImageTensor, WeakTransformConfig
from .semantic import GenSample, SamplingConfig, SemanticDistribution, estimate_spd
from .vcse import shannon_entropy

__all__ = [
    "Method",
    "Orientation",
    "UncertaintyScore",
    "avg_prob",
    "max_prob",
    "avg_ent",
    "max_ent",
    "token_entropies",
    "semantic_entropy",
    "semantic_entropy_from_spd",
    "radflag_score",
    "cross_check_score",
]


class Method(str, Enum):
    AVG_PROB = "AvgProb"
    MAX_PROB = "MaxProb"
    AVG_ENT = "AvgEnt"
    MAX_ENT = "MaxEnt"
    SE = "SE"
    RADFLAG = "RadFlag"
    CROSS_CHECK = "CrossCheck"
    UNIVRSE = "UniVRSE"


class Orientation(str, Enum):
    HIGHER_IS_HALLUCINATED = "higher-means-more-hallucinated"
    LOWER_IS_HALLUCINATED = "lower-means-more-hallucinated"


# Probability methods read low = suspicious; everything else reads high = suspicious.
METHOD_ORIENTATION = {
    Method.AVG_PROB: Orientation.LOWER_IS_HALLUCINATED,
    Method.MAX_PROB: Orientation.LOWER_IS_HALLUCINATED,
    Method.AVG_ENT: Orientation.HIGHER_IS_HALLUCINATED,
    Method.MAX_ENT: Orientation.HIGHER_IS_HALLUCINATED,
    Method.SE: Orientation.HIGHER_IS_HALLUCINATED,
    Method.RADFLAG: Orientation.HIGHER_IS_HALLUCINATED,
    Method.CROSS_CHECK: Orientation.HIGHER_IS_HALLUCINATED,
    Method.UNIVRSE: Orientation.HIGHER_IS_HALLUCINATED,
}


@dataclass(frozen=True)
class UncertaintyScore:
    method: Method
    value: float
    orientation: Orientation

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise InvalidConfig(f"{self.method.value} score must be finite")
        if self.orientation is not METHOD_ORIENTATION[self.method]:
            raise InvalidConfig(f"wrong orientation for {self.method.value}")

    @classmethod
    def of(cls, method: Method, value: float) -> "UncertaintyScore":
        return cls(method, value, METHOD_ORIENTATION[method])


def _token_probs(sample: GenSample) -> list[float]:
    if not sample.token_logprobs:
        raise EmptySequence("sample has no tokens")
    return [math.exp(lp) for lp in sample.token_logprobs]


def avg_prob(sample: GenSample) -> float:
    probs = _token_probs(sample)
    return math.fsum(probs) / len(probs)


def max_prob(sample: GenSample) -> float:
    return max(_token_probs(sample))


def token_entropies(sample: GenSample) -> list[float]:
    """Per-token entropy over the top-k alternatives plus one residual
    pseudo-outcome holding any unreported tail mass."""
    if sample.top_logprobs is None or not sample.top_logprobs:
        raise MissingTopK("sample lacks top-k alternative logprobs")
    entropies = []
    for top in sample.top_logprobs:
        if not top:
            raise MissingTopK("token with empty top-k list")
        probs = [math.exp(lp) for lp in top]
        residual = max(0.0, 1.0 - math.fsum(probs))
        probs.append(residual)
        entropies.append(-math.fsum(p * math.log(p) for p in probs if p > 0.0))
    return entropies


def avg_ent(sample: GenSample) -> float:
    ents = token_entropies(sample)
    return math.fsum(ents) / len(ents)


def max_ent(sample: GenSample) -> float:
    return max(token_entropies(sample))


def semantic_entropy_from_spd(spd: SemanticDistribution) -> float:
    return shannon_entropy(spd.probs)


def semantic_entropy(
    image: ImageTensor,
    question: str,
    cfg: SamplingConfig,
    vlm: VlmBackend,
    nli: NliBackend,
    *,
    seeds: list[int],
    weak: WeakTransformConfig | None = None,
) -> float:
    """Entropy of the original-branch SPD: no distortion, no contrasting."""
    spd = estimate_spd(image, question, cfg, vlm, nli, seeds=seeds, weak=weak)
    return semantic_entropy_from_spd(spd)


def radflag_score(
    original: str, samples: list[GenSample], nli: NliBackend, context: str = ""
) -> float:
    """1 - (fraction of samples agreeing with the audited answer)."""
    if not samples:
        raise InvalidConfig("radflag needs at least one sample")
    agree = sum(
        1 for s in samples if semantically_equivalent(nli, original, s.text, context)
    )
    return 1.0 - agree / len(samples)


def cross_check_score(
    original: str, others: list[str], nli: NliBackend, context: str = ""
) -> float:
    """1 - mean agreement between auxiliary-model responses and the original."""
    if not others:
        raise NoAuxiliaryBackend("cross-checking needs at least one auxiliary response")
    agree = sum(
        1 for text in others if semantically_equivalent(nli, original, text, context)
    )
    return 1.0 - agree / len(others)
