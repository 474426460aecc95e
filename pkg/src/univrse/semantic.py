"""Semantic predictive distribution over sampled responses.

M responses are sampled for one (image, question) pair, clustered into
semantic equivalence classes by sequential bidirectional entailment, and
each class receives the summed sequence probability of its members,
normalized into a probability vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .backends.base import (
    GenerationRequest,
    GenerationResult,
    NliBackend,
    VlmBackend,
    encode_png,
    semantically_equivalent,
)
from .errors import EmptySequence, InvalidConfig
from .perturb import ImageTensor, WeakTransformConfig, apply_weak_transform

__all__ = [
    "GenSample",
    "SemanticClass",
    "SemanticDistribution",
    "SamplingConfig",
    "sequence_prob",
    "cluster_responses",
    "spd_from_samples",
    "draw_branch_samples",
    "estimate_spd",
]


@dataclass(frozen=True)
class GenSample:
    """One sampled response with its per-token log-probabilities."""

    text: str
    token_logprobs: tuple[float, ...]
    seq_logprob: float
    transform_seed: int
    top_logprobs: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if self.text and not self.token_logprobs:
            raise InvalidConfig("nonempty text requires token logprobs")
        total = math.fsum(self.token_logprobs)
        if not math.isclose(total, self.seq_logprob, rel_tol=0.0, abs_tol=1e-9):
            raise InvalidConfig(
                f"seq_logprob {self.seq_logprob} != sum of token logprobs {total}"
            )

    @classmethod
    def from_result(cls, result: GenerationResult, transform_seed: int) -> "GenSample":
        logprobs = tuple(result.chosen_logprobs)
        return cls(
            text=result.text,
            token_logprobs=logprobs,
            seq_logprob=math.fsum(logprobs),
            transform_seed=transform_seed,
            top_logprobs=tuple(tuple(top) for top in result.top_lists),
        )


@dataclass
class SemanticClass:
    """A cluster of mutually entailing responses; the founder is the representative."""

    id: int
    representative: str
    member_indices: list[int]
    mass: float = 0.0


@dataclass
class SemanticDistribution:
    classes: list[SemanticClass]
    probs: list[float]
    degenerate: bool = False
    normalized: bool = True

    def __post_init__(self):
        if len(self.classes) != len(self.probs):
            raise InvalidConfig("probs must align with classes")
        if self.normalized:
            if any(p < 0 or p > 1 for p in self.probs):
                raise InvalidConfig("probabilities must lie in [0, 1]")
            if abs(math.fsum(self.probs) - 1.0) > 1e-9:
                raise InvalidConfig("probabilities must sum to 1")

    @property
    def representatives(self) -> list[str]:
        return [c.representative for c in self.classes]


@dataclass(frozen=True)
class SamplingConfig:
    """Knobs for one branch of M-sample SPD estimation."""

    m_samples: int = 10
    temperature: float = 1.0
    max_tokens: int = 256
    top_logprobs: int = 20
    length_normalize: bool = False
    raw_masses: bool = False

    def validate(self) -> None:
        if self.m_samples < 2:
            raise InvalidConfig("m_samples must be >= 2")
        if self.temperature <= 0:
            raise InvalidConfig("temperature must be > 0")


def sequence_prob(sample: GenSample, length_normalize: bool = False) -> float:
    """Sequence probability: product of token probabilities, optionally
    replaced by their geometric mean."""
    n = len(sample.token_logprobs)
    if n == 0:
        raise EmptySequence("sample has no tokens")
    if length_normalize:
        return math.exp(sample.seq_logprob / n)
    return math.exp(sample.seq_logprob)


def cluster_responses(
    samples: list[GenSample], equiv: NliBackend, context: str = ""
) -> list[SemanticClass]:
    """Sequential clustering: each sample joins the first existing class whose
    representative it mutually entails, else founds a new class."""
    if not samples:
        raise InvalidConfig("cannot cluster an empty sample list")
    classes: list[SemanticClass] = []
    for idx, sample in enumerate(samples):
        for cls in classes:
            if semantically_equivalent(equiv, cls.representative, sample.text, context):
                cls.member_indices.append(idx)
                break
        else:
            classes.append(
                SemanticClass(id=len(classes), representative=sample.text,
                              member_indices=[idx])
            )
    return classes


def spd_from_samples(
    samples: list[GenSample],
    nli: NliBackend,
    context: str = "",
    *,
    length_normalize: bool = False,
    raw_masses: bool = False,
) -> SemanticDistribution:
    """Cluster cached samples and aggregate their sequence probabilities.

    When every sequence probability underflows to zero the distribution is
    replaced by a uniform one and flagged degenerate.
    """
    classes = cluster_responses(samples, nli, context)
    for cls in classes:
        cls.mass = math.fsum(
            sequence_prob(samples[i], length_normalize) for i in cls.member_indices
        )
    total = math.fsum(cls.mass for cls in classes)
    if total == 0.0:
        uniform = [1.0 / len(classes)] * len(classes)
        return SemanticDistribution(classes, uniform, degenerate=True)
    if raw_masses:
        return SemanticDistribution(
            classes, [cls.mass for cls in classes], normalized=False
        )
    return SemanticDistribution(classes, [cls.mass / total for cls in classes])


def draw_branch_samples(
    image: ImageTensor,
    question: str,
    cfg: SamplingConfig,
    vlm: VlmBackend,
    *,
    seeds: list[int],
    weak: WeakTransformConfig | None = None,
) -> list[GenSample]:
    """Draw one branch's samples; each sample gets an independently seeded
    weak transform of the branch image when transforms are enabled."""
    samples = []
    for seed in seeds:
        branch_img = image
        if weak is not None and weak.enabled:
            branch_img = apply_weak_transform(image, weak, seed)
        req = GenerationRequest(
            prompt=question,
            image_png=encode_png(branch_img),
            temperature=cfg.temperature,
            max_tokens=cfg.max_tokens,
            top_logprobs=cfg.top_logprobs,
            seed=seed,
        )
        samples.append(GenSample.from_result(vlm.generate(req), seed))
    return samples


def estimate_spd(
    image: ImageTensor,
    question: str,
    cfg: SamplingConfig,
    vlm: VlmBackend,
    nli: NliBackend,
    *,
    seeds: list[int],
    weak: WeakTransformConfig | None = None,
) -> SemanticDistribution:
    """Full single-branch estimation: sample M responses, cluster, aggregate."""
    cfg.validate()
    if len(seeds) != cfg.m_samples:
        raise InvalidConfig(f"need {cfg.m_samples} seeds, got {len(seeds)}")
    samples = draw_branch_samples(image, question, cfg, vlm, seeds=seeds, weak=weak)
    return spd_from_samples(
        samples,
        nli,
        context=question,
        length_normalize=cfg.length_normalize,
        raw_masses=cfg.raw_masses,
    )
