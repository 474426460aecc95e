"""Detection-quality metrics: pairwise AUC and the area under the top-X%
hallucination-degree curve (AUA)."""

from __future__ import annotations

from dataclasses import dataclass

from .baselines import Orientation, UncertaintyScore
from .errors import EmptySamples, InvalidConfig, SingleClass

__all__ = [
    "ScoredSample",
    "normalize_confidence",
    "binarize_label",
    "auc",
    "aua",
]


@dataclass(frozen=True)
class ScoredSample:
    """One evaluation unit: orientation-normalized confidence plus its label."""

    id: str
    confidence: float
    alpha_h: float
    binary_halluc: bool


def normalize_confidence(score: UncertaintyScore) -> float:
    """Map every method onto a shared axis where higher means more confident."""
    if score.orientation is Orientation.HIGHER_IS_HALLUCINATED:
        return -score.value
    return score.value


def binarize_label(alpha_h: float, threshold: float = 0.0) -> bool:
    """A sample is hallucinated iff its hallucination ratio exceeds the threshold."""
    if not (0.0 <= alpha_h <= 1.0):
        raise InvalidConfig(f"alpha_h must lie in [0, 1], got {alpha_h}")
    return alpha_h > threshold


def auc(samples: list[ScoredSample]) -> float:
    """Probability a random correct sample outranks a random hallucinated one,
    with half credit for ties (computed via tie-averaged ranks, which equals
    exhaustive pair counting exactly)."""
    correct = [s.confidence for s in samples if not s.binary_halluc]
    halluc = [s.confidence for s in samples if s.binary_halluc]
    if not correct or not halluc:
        raise SingleClass("auc requires both correct and hallucinated samples")

    tagged = sorted(
        [(c, False) for c in halluc] + [(c, True) for c in correct],
        key=lambda t: t[0],
    )
    rank_sum_correct = 0.0
    i = 0
    while i < len(tagged):
        j = i
        while j < len(tagged) and tagged[j][0] == tagged[i][0]:
            j += 1
        avg_rank = (i + 1 + j) / 2.0  # 1-based average rank of the tie group
        rank_sum_correct += avg_rank * sum(1 for k in range(i, j) if tagged[k][1])
        i = j
    n_c, n_h = len(correct), len(halluc)
    u = rank_sum_correct - n_c * (n_c + 1) / 2.0
    return u / (n_c * n_h)


def aua(samples: list[ScoredSample]) -> float:
    """Mean hallucination degree over the top-X% most confident samples,
    averaged across X = 1..100. Confidence ties break by id ascending."""
    if not samples:
        raise EmptySamples("aua requires at least one sample")
    ordered = sorted(samples, key=lambda s: (-s.confidence, s.id))
    n = len(ordered)
    prefix = [0.0]
    for s in ordered:
        prefix.append(prefix[-1] + s.alpha_h)
    total = 0.0
    for x in range(1, 101):
        k = (x * n + 99) // 100  # ceil(x * n / 100), never zero
        total += prefix[k] / k
    return total / 100.0
