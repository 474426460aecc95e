"""Vision-conditioned semantic entropy and atomic-fact hallucination labels.

Short-form answers are scored by contrasting the semantic distribution of
responses sampled from the original image against the distribution obtained
from a deliberately degraded copy; reports are decomposed into atomic claims
and verified claim by claim. Ground-truth labels come from atomic-fact
alignment between responses and references. All model access goes through
pluggable backends (OpenAI-compatible HTTP or deterministic scripted mocks).
"""

from .alfa import AlfaLabel, AtomicFact, ClaimJudgment, compute_alfa
from .baselines import Method, UncertaintyScore
from .longform import AtomicClaim, ClaimVerificationItem
from .metrics import ScoredSample, auc, aua, binarize_label, normalize_confidence
from .perturb import (
    DistortionConfig,
    ImageTensor,
    WeakTransformConfig,
    apply_distortion,
    apply_weak_transform,
    load_image,
)
from .semantic import (
    GenSample,
    SamplingConfig,
    SemanticClass,
    SemanticDistribution,
    cluster_responses,
    estimate_spd,
    sequence_prob,
)
from .vcse import (
    VisionConditionedDistribution,
    VseConfig,
    VseScore,
    align_class_sets,
    calibrate_threshold,
    compute_vse,
    contrast_distributions,
    shannon_entropy,
)

__version__ = "0.1.0"
