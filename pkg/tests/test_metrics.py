import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from univrse.baselines import Method, UncertaintyScore
from univrse.errors import EmptySamples, InvalidConfig, SingleClass
from univrse.metrics import ScoredSample, auc, aua, binarize_label, normalize_confidence


def brute_force_auc(samples):
    """Oracle: enumerate every (correct, hallucinated) pair."""
    correct = [s.confidence for s in samples if not s.binary_halluc]
    halluc = [s.confidence for s in samples if s.binary_halluc]
    wins = sum(1 for c in correct for h in halluc if c > h)
    ties = sum(1 for c in correct for h in halluc if c == h)
    return (wins + 0.5 * ties) / (len(correct) * len(halluc))


def brute_force_aua(samples):
    """Oracle: direct 100-term enumeration of the top-X% means."""
    ordered = sorted(samples, key=lambda s: (-s.confidence, s.id))
    n = len(ordered)
    values = []
    for x in range(1, 101):
        k = math.ceil(x * n / 100)
        values.append(sum(s.alpha_h for s in ordered[:k]) / k)
    return sum(values) / 100


def mk(conf, alpha, ident="s", halluc=None):
    return ScoredSample(
        id=ident, confidence=conf, alpha_h=alpha,
        binary_halluc=(alpha > 0) if halluc is None else halluc,
    )


def random_instance(rng, n=None):
    n = n or rng.randint(2, 200)
    samples = []
    for i in range(n):
        halluc = rng.random() < 0.5
        alpha = rng.uniform(0.001, 1.0) if halluc else 0.0
        conf = rng.choice([rng.uniform(-1, 1), round(rng.uniform(-1, 1), 1)])  # with ties
        samples.append(mk(conf, alpha, ident=f"s{i:03d}", halluc=halluc))
    return samples


class TestNormalizeConfidence:
    def test_entropy_scores_negate(self):
        assert normalize_confidence(UncertaintyScore.of(Method.SE, 0.7)) == -0.7

    def test_probability_scores_pass_through(self):
        assert normalize_confidence(UncertaintyScore.of(Method.AVG_PROB, 0.9)) == 0.9

    def test_zero(self):
        assert normalize_confidence(UncertaintyScore.of(Method.UNIVRSE, 0.0)) == 0.0


class TestBinarize:
    def test_zero_alpha_is_correct(self):
        assert binarize_label(0.0) is False

    def test_positive_alpha_is_hallucinated(self):
        assert binarize_label(0.25) is True

    def test_threshold_half(self):
        assert binarize_label(0.25, threshold=0.5) is False

    def test_rejects_out_of_range(self):
        with pytest.raises(InvalidConfig):
            binarize_label(1.2)


class TestAuc:
    def test_perfect_separation(self):
        samples = [mk(0.9, 0), mk(0.8, 0), mk(0.7, 1), mk(0.3, 1)]
        assert auc(samples) == 1.0

    def test_interleaved(self):
        samples = [mk(0.6, 0), mk(0.8, 1), mk(0.4, 1)]
        assert auc(samples) == 0.5

    def test_all_ties(self):
        assert auc([mk(0.5, 0), mk(0.5, 1)]) == 0.5

    def test_single_class_rejected(self):
        with pytest.raises(SingleClass):
            auc([mk(0.5, 1), mk(0.6, 1)])

    def test_matches_brute_force_on_random_instances(self):
        rng = random.Random(12)
        checked = 0
        while checked < 500:
            samples = random_instance(rng)
            if all(s.binary_halluc for s in samples) or not any(
                s.binary_halluc for s in samples
            ):
                continue
            assert auc(samples) == brute_force_auc(samples)
            checked += 1

    def test_invariant_under_increasing_transform(self):
        rng = random.Random(5)
        samples = random_instance(rng, n=60)
        transformed = [
            ScoredSample(s.id, math.exp(3 * s.confidence), s.alpha_h, s.binary_halluc)
            for s in samples
        ]
        assert auc(samples) == auc(transformed)

    def test_reversal_complements_without_ties(self):
        rng = random.Random(8)
        samples = [
            mk(i + rng.random() * 0.5, rng.random() < 0.4, ident=f"s{i}")
            for i in range(30)
        ]
        samples = [
            ScoredSample(s.id, s.confidence, float(s.binary_halluc), s.binary_halluc)
            for s in samples
        ]
        reversed_ = [
            ScoredSample(s.id, -s.confidence, s.alpha_h, s.binary_halluc)
            for s in samples
        ]
        assert auc(samples) + auc(reversed_) == pytest.approx(1.0, abs=1e-12)


class TestAua:
    def test_all_zero_alpha(self):
        samples = [mk(0.9, 0.0, "a"), mk(0.1, 0.0, "b", halluc=False)]
        assert aua(samples) == 0.0

    def test_two_sample_hand_enumeration(self):
        # X=1..50 use the top sample (alpha 0), X=51..100 both: AUA = 0.25
        samples = [mk(0.9, 0.0, "a"), mk(0.1, 1.0, "b")]
        assert aua(samples) == 0.25
        assert aua(samples) == brute_force_aua(samples)

    def test_singleton(self):
        assert aua([mk(0.3, 0.4, "only")]) == pytest.approx(0.4, abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(EmptySamples):
            aua([])

    def test_matches_oracle_and_transform_invariance(self):
        rng = random.Random(3)
        for _ in range(100):
            samples = random_instance(rng, n=rng.randint(1, 40))
            value = aua(samples)
            assert value == pytest.approx(brute_force_aua(samples), abs=1e-12)
            transformed = [
                ScoredSample(s.id, 2.0 * s.confidence + 1.0, s.alpha_h, s.binary_halluc)
                for s in samples
            ]
            assert aua(transformed) == pytest.approx(value, abs=1e-12)

    @given(
        alphas=st.lists(st.floats(min_value=0, max_value=1), min_size=1, max_size=30),
        seed=st.integers(0, 2**31),
    )
    @settings(max_examples=100, deadline=None)
    def test_bounded_by_alpha_range(self, alphas, seed):
        rng = random.Random(seed)
        samples = [
            mk(rng.uniform(-1, 1), a, ident=f"s{i}") for i, a in enumerate(alphas)
        ]
        value = aua(samples)
        assert min(alphas) - 1e-12 <= value <= max(alphas) + 1e-12
