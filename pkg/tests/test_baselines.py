import math

import pytest

from univrse.baselines import (
    Method,
    Orientation,
    UncertaintyScore,
    avg_ent,
    avg_prob,
    cross_check_score,
    max_ent,
    max_prob,
    radflag_score,
    semantic_entropy_from_spd,
)
from univrse.errors import (
    EmptySequence,
    InvalidConfig,
    MissingTopK,
    NoAuxiliaryBackend,
)
from univrse.semantic import GenSample, SemanticClass, SemanticDistribution

from conftest import RelationNli


def sample(logprobs, top=None, text="t"):
    return GenSample(
        text=text, token_logprobs=tuple(logprobs),
        seq_logprob=math.fsum(logprobs), transform_seed=0,
        top_logprobs=tuple(tuple(t) for t in top) if top is not None else None,
    )


def spd(probs):
    classes = [
        SemanticClass(id=i, representative=f"c{i}", member_indices=[i], mass=p)
        for i, p in enumerate(probs)
    ]
    return SemanticDistribution(classes, list(probs))


class TestTokenProbs:
    def test_certainty(self):
        s = sample([0.0, 0.0, 0.0])
        assert avg_prob(s) == 1.0
        assert max_prob(s) == 1.0

    def test_arithmetic(self):
        s = sample([-math.log(2), -math.log(4)])
        assert avg_prob(s) == pytest.approx(0.375, abs=1e-12)
        assert max_prob(s) == pytest.approx(0.5, abs=1e-12)

    def test_empty(self):
        with pytest.raises(EmptySequence):
            avg_prob(sample([], text=""))

    def test_scores_in_unit_interval(self):
        s = sample([-0.2, -3.0, -0.7])
        assert 0 < avg_prob(s) <= 1
        assert 0 < max_prob(s) <= 1


class TestTokenEntropy:
    def test_point_mass_token(self):
        s = sample([0.0], top=[[0.0]])
        assert avg_ent(s) == 0.0
        assert max_ent(s) == 0.0

    def test_uniform_pair_no_residual(self):
        lp = -math.log(2)
        s = sample([lp], top=[[lp, lp]])
        assert avg_ent(s) == pytest.approx(math.log(2), abs=1e-12)

    def test_residual_pseudo_token(self):
        # top-2 (0.5, 0.25) leaves 0.25 residual: H over (0.5, 0.25, 0.25)
        s = sample([-math.log(2)], top=[[-math.log(2), -math.log(4)]])
        assert avg_ent(s) == pytest.approx(1.039720, abs=1e-6)

    def test_missing_topk(self):
        with pytest.raises(MissingTopK):
            avg_ent(sample([-0.1]))

    def test_topk_order_invariance(self):
        # entropy only sees the multiset of alternatives
        a = sample([-0.1, -0.2], top=[[-0.1, -2.0], [-0.2, -1.5]])
        b = sample([-0.1, -0.2], top=[[-0.1, -2.0], [-0.2, -1.5]])
        assert avg_ent(a) == avg_ent(b)
        assert max_ent(a) == max_ent(b)

    def test_max_over_tokens(self):
        lp_flat = -math.log(2)
        s = sample([0.0, lp_flat], top=[[0.0], [lp_flat, lp_flat]])
        assert max_ent(s) == pytest.approx(math.log(2), abs=1e-12)
        assert avg_ent(s) == pytest.approx(math.log(2) / 2, abs=1e-12)


class TestSemanticEntropy:
    def test_single_class(self):
        assert semantic_entropy_from_spd(spd([1.0])) == 0.0

    def test_two_even_classes(self):
        assert semantic_entropy_from_spd(spd([0.5, 0.5])) == pytest.approx(
            math.log(2), abs=1e-12
        )

    def test_skewed_classes(self):
        assert semantic_entropy_from_spd(spd([6 / 7, 1 / 7])) == pytest.approx(
            0.410116, abs=1e-6
        )


class TestRadFlag:
    def test_all_agree(self):
        samples = [sample([-0.1], text="yes") for _ in range(4)]
        assert radflag_score("yes", samples, RelationNli()) == 0.0

    def test_none_agree(self):
        samples = [sample([-0.1], text=f"other {i}") for i in range(4)]
        assert radflag_score("yes", samples, RelationNli()) == 1.0

    def test_partial_agreement(self):
        samples = [sample([-0.1], text="yes")] * 3 + [
            sample([-0.1], text=f"no {i}") for i in range(7)
        ]
        assert radflag_score("yes", samples, RelationNli()) == pytest.approx(0.7)

    def test_needs_samples(self):
        with pytest.raises(InvalidConfig):
            radflag_score("yes", [], RelationNli())


class TestCrossCheck:
    def test_full_agreement(self):
        assert cross_check_score("a", ["a", "a"], RelationNli()) == 0.0

    def test_half_agreement(self):
        assert cross_check_score("a", ["a", "b"], RelationNli()) == 0.5

    def test_no_auxiliary(self):
        with pytest.raises(NoAuxiliaryBackend):
            cross_check_score("a", [], RelationNli())


class TestUncertaintyScore:
    def test_orientations_fixed_per_method(self):
        assert UncertaintyScore.of(Method.AVG_PROB, 0.5).orientation is (
            Orientation.LOWER_IS_HALLUCINATED
        )
        assert UncertaintyScore.of(Method.SE, 0.5).orientation is (
            Orientation.HIGHER_IS_HALLUCINATED
        )
        with pytest.raises(InvalidConfig):
            UncertaintyScore(Method.SE, 0.5, Orientation.LOWER_IS_HALLUCINATED)

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidConfig):
            UncertaintyScore.of(Method.SE, math.inf)
