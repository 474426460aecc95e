"""Vision-conditioned semantic entropy.

The original-image and distorted-image semantic distributions are aligned
into one class space, contrasted as softmax((1+lambda)*p - lambda*p'), and
the Shannon entropy of the result is the hallucination score. Answers that
survive image degradation unchanged keep a flat contrasted distribution
(high entropy); visually grounded answers collapse it (low entropy).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .backends.base import NliBackend, VlmBackend, semantically_equivalent
from .errors import (
    InvalidConfig,
    InvalidLambda,
    LengthMismatch,
    NotADistribution,
    SingleClassLabels,
)
from .perturb import (
    DistortionConfig,
    ImageTensor,
    WeakTransformConfig,
    apply_distortion,
)
from .rng import LANE_DISTORTED, LANE_DISTORTION, LANE_ORIGINAL, branch_seeds, derive_seed
from .semantic import (
    GenSample,
    SamplingConfig,
    SemanticDistribution,
    draw_branch_samples,
    spd_from_samples,
)

__all__ = [
    "VisionConditionedDistribution",
    "VseScore",
    "VseConfig",
    "VseOutcome",
    "align_class_sets",
    "contrast_distributions",
    "shannon_entropy",
    "compute_vse",
    "run_contrast_pipeline",
    "calibrate_threshold",
    "SingleThresholdDegenerate",
]

PLACEMENT_BOTH = "both"
PLACEMENT_DISTORTED_ONLY = "distorted_only"
_PLACEMENTS = (PLACEMENT_BOTH, PLACEMENT_DISTORTED_ONLY)

# inclusive 1e-6 tolerance plus slack for decimal inputs at the boundary
_SUM_TOL = 1e-6 + 1e-12


@dataclass
class VisionConditionedDistribution:
    """Aligned and contrasted class distribution over N unified classes."""

    unified_classes: list[str]
    p_orig: list[float]
    p_dist: list[float]
    p_contrasted: list[float]
    lam: float

    def __post_init__(self):
        n = len(self.unified_classes)
        if not (len(self.p_orig) == len(self.p_dist) == len(self.p_contrasted) == n >= 1):
            raise InvalidConfig("all vectors must share length N >= 1")
        if abs(math.fsum(self.p_contrasted) - 1.0) > 1e-9:
            raise InvalidConfig("contrasted distribution must sum to 1")
        if any(p <= 0 for p in self.p_contrasted):
            raise InvalidConfig("softmax output must be strictly positive")


@dataclass(frozen=True)
class VseScore:
    value: float
    n_classes: int
    flagged_degenerate: bool = False

    def __post_init__(self):
        if not (0.0 <= self.value <= math.log(self.n_classes) + 1e-9):
            raise InvalidConfig(
                f"entropy {self.value} outside [0, ln {self.n_classes}]"
            )


def align_class_sets(
    spd_a: SemanticDistribution,
    spd_b: SemanticDistribution,
    nli: NliBackend,
    context: str = "",
) -> tuple[list[str], list[float], list[float]]:
    """Merge two class sets into one space anchored on spd_a's classes.

    Each spd_b class folds its probability into the first spd_a class whose
    representative it mutually entails, otherwise it is appended as a new
    unified class carrying zero probability on the a-side.
    """
    reps = list(spd_a.representatives)
    p_a = list(spd_a.probs)
    p_b = [0.0] * len(reps)
    n_anchor = len(reps)
    for cls_b, prob_b in zip(spd_b.classes, spd_b.probs):
        for i in range(n_anchor):
            if semantically_equivalent(nli, reps[i], cls_b.representative, context):
                p_b[i] += prob_b
                break
        else:
            reps.append(cls_b.representative)
            p_a.append(0.0)
            p_b.append(prob_b)
    return reps, p_a, p_b


def contrast_distributions(
    p: list[float],
    p_prime: list[float],
    lam: float,
    *,
    require_normalized: bool = True,
) -> list[float]:
    """softmax((1+lam)*p - lam*p'), evaluated with max-subtraction."""
    if lam < 0:
        raise InvalidLambda(f"lambda must be >= 0, got {lam}")
    if len(p) != len(p_prime) or len(p) < 1:
        raise LengthMismatch(f"lengths {len(p)} vs {len(p_prime)}")
    if require_normalized:
        for name, vec in (("p", p), ("p_prime", p_prime)):
            if abs(math.fsum(vec) - 1.0) > _SUM_TOL:
                raise NotADistribution(f"{name} must sum to 1 within 1e-6")
    logits = (1.0 + lam) * np.asarray(p, dtype=np.float64) - lam * np.asarray(
        p_prime, dtype=np.float64
    )
    shifted = np.exp(logits - logits.max())
    return [float(v) for v in shifted / shifted.sum()]


def shannon_entropy(dist: list[float]) -> float:
    """Entropy in nats with the 0*ln(0) = 0 convention."""
    if abs(math.fsum(dist) - 1.0) > _SUM_TOL or any(p < 0 for p in dist):
        raise NotADistribution("input must be a probability vector")
    return -math.fsum(p * math.log(p) for p in dist if p > 0.0) + 0.0


@dataclass(frozen=True)
class VseConfig:
    """Everything one vision-contrast evaluation needs besides the inputs."""

    sampling: SamplingConfig = SamplingConfig()
    weak: WeakTransformConfig = WeakTransformConfig()
    distortion: DistortionConfig = DistortionConfig()
    placement: str = PLACEMENT_BOTH
    lam: float = 1.0
    run_seed: int = 0
    record_key: str = ""
    nli_context: str | None = None  # None: use the question as context

    def validate(self) -> None:
        self.sampling.validate()
        self.weak.validate()
        self.distortion.validate()
        if self.placement not in _PLACEMENTS:
            raise InvalidConfig(f"placement must be one of {_PLACEMENTS}")
        if self.lam < 0:
            raise InvalidLambda("lambda must be >= 0")


@dataclass
class VseOutcome:
    """Score plus every intermediate needed to replay or audit the pipeline."""

    score: VseScore
    vcd: VisionConditionedDistribution
    orig_spd: SemanticDistribution
    dist_spd: SemanticDistribution
    orig_samples: list[GenSample]
    dist_samples: list[GenSample]
    distortion_seed: int


def run_contrast_pipeline(
    image: ImageTensor,
    question: str,
    cfg: VseConfig,
    vlm: VlmBackend,
    nli: NliBackend,
) -> VseOutcome:
    """Both branches, alignment, contrast, entropy; returns all intermediates."""
    cfg.validate()
    m = cfg.sampling.m_samples
    context = cfg.nli_context if cfg.nli_context is not None else question

    distortion_seed = derive_seed(cfg.run_seed, cfg.record_key, LANE_DISTORTION)
    distorted = apply_distortion(image, cfg.distortion, distortion_seed)

    # In distorted_only placement the original image stays untouched and
    # serves as the semantic anchor; weak transforms hit the distorted branch.
    orig_weak = cfg.weak if cfg.placement == PLACEMENT_BOTH else None
    orig_seeds = branch_seeds(cfg.run_seed, cfg.record_key, LANE_ORIGINAL, m)
    dist_seeds = branch_seeds(cfg.run_seed, cfg.record_key, LANE_DISTORTED, m)

    orig_samples = draw_branch_samples(
        image, question, cfg.sampling, vlm, seeds=orig_seeds, weak=orig_weak
    )
    dist_samples = draw_branch_samples(
        distorted, question, cfg.sampling, vlm, seeds=dist_seeds, weak=cfg.weak
    )

    orig_spd = spd_from_samples(
        orig_samples, nli, context=context,
        length_normalize=cfg.sampling.length_normalize,
        raw_masses=cfg.sampling.raw_masses,
    )
    dist_spd = spd_from_samples(
        dist_samples, nli, context=context,
        length_normalize=cfg.sampling.length_normalize,
        raw_masses=cfg.sampling.raw_masses,
    )
    return contrast_from_spds(orig_spd, dist_spd, nli, context, cfg.lam,
                              orig_samples=orig_samples, dist_samples=dist_samples,
                              distortion_seed=distortion_seed)


def contrast_from_spds(
    orig_spd: SemanticDistribution,
    dist_spd: SemanticDistribution,
    nli: NliBackend,
    context: str,
    lam: float,
    *,
    orig_samples: list[GenSample] | None = None,
    dist_samples: list[GenSample] | None = None,
    distortion_seed: int = 0,
) -> VseOutcome:
    """Alignment + contrast + entropy over two already-estimated SPDs."""
    reps, p_orig, p_dist = align_class_sets(orig_spd, dist_spd, nli, context)
    normalized = orig_spd.normalized and dist_spd.normalized
    p_contrasted = contrast_distributions(
        p_orig, p_dist, lam, require_normalized=normalized
    )
    vcd = VisionConditionedDistribution(reps, p_orig, p_dist, p_contrasted, lam)
    score = VseScore(
        value=shannon_entropy(p_contrasted),
        n_classes=len(reps),
        flagged_degenerate=orig_spd.degenerate or dist_spd.degenerate,
    )
    return VseOutcome(
        score=score,
        vcd=vcd,
        orig_spd=orig_spd,
        dist_spd=dist_spd,
        orig_samples=orig_samples or [],
        dist_samples=dist_samples or [],
        distortion_seed=distortion_seed,
    )


def compute_vse(
    image: ImageTensor,
    question: str,
    cfg: VseConfig,
    vlm: VlmBackend,
    nli: NliBackend,
) -> VseScore:
    return run_contrast_pipeline(image, question, cfg, vlm, nli).score


class SingleThresholdDegenerate(UserWarning):
    pass


def calibrate_threshold(scores: list[float], labels: list[bool]) -> float:
    """Pick the cutoff maximizing Youden's J over midpoints of consecutive
    distinct sorted scores; ties resolve toward the smaller threshold.

    A score strictly above the threshold flags a hallucination.
    """
    if len(scores) != len(labels) or not scores:
        raise InvalidConfig("scores and labels must be equal-length and nonempty")
    n_pos = sum(labels)
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassLabels("calibration requires both label classes")

    distinct = sorted(set(scores))
    if len(distinct) == 1:
        warnings.warn(
            "all calibration scores are identical", SingleThresholdDegenerate
        )
        return distinct[0]

    best_tau, best_j = None, -math.inf
    for lo, hi in zip(distinct, distinct[1:]):
        tau = (lo + hi) / 2.0
        tp = sum(1 for s, y in zip(scores, labels) if y and s > tau)
        tn = sum(1 for s, y in zip(scores, labels) if not y and s <= tau)
        j = tp / n_pos + tn / n_neg - 1.0
        if j > best_j:
            best_tau, best_j = tau, j
    return best_tau
