import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from univrse.backends import GenerationResult, ScriptedVlmBackend, image_digest
from univrse.errors import EmptySequence, InvalidConfig
from univrse.perturb import WeakTransformConfig
from univrse.semantic import (
    GenSample,
    SamplingConfig,
    cluster_responses,
    draw_branch_samples,
    estimate_spd,
    sequence_prob,
    spd_from_samples,
)

from conftest import RelationNli, gradient_image


def sample(text, logprobs, seed=0):
    return GenSample(
        text=text, token_logprobs=tuple(logprobs),
        seq_logprob=math.fsum(logprobs), transform_seed=seed,
    )


def brute_force_partition(n, equivalent):
    """Oracle: connected components of the equivalence relation."""
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            x = parent[x]
        return x

    for i in range(n):
        for j in range(i + 1, n):
            if equivalent(i, j):
                parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return {frozenset(g) for g in groups.values()}


class TestGenSample:
    def test_seq_logprob_must_match_sum(self):
        with pytest.raises(InvalidConfig):
            GenSample(text="x", token_logprobs=(-0.5,), seq_logprob=-0.4, transform_seed=0)

    def test_nonempty_text_needs_logprobs(self):
        with pytest.raises(InvalidConfig):
            GenSample(text="x", token_logprobs=(), seq_logprob=0.0, transform_seed=0)

    def test_from_result_carries_topk(self):
        result = GenerationResult.from_lists("hi", [-0.1, -0.2], [[-0.1, -1.0], [-0.2]])
        s = GenSample.from_result(result, transform_seed=9)
        assert s.seq_logprob == pytest.approx(-0.3)
        assert s.top_logprobs == ((-0.1, -1.0), (-0.2,))
        assert s.transform_seed == 9


class TestSequenceProb:
    def test_certain_tokens(self):
        assert sequence_prob(sample("a", [0.0, 0.0])) == 1.0

    def test_product_of_halves(self):
        s = sample("a", [-math.log(2), -math.log(2)])
        assert sequence_prob(s) == pytest.approx(0.25, abs=1e-12)

    def test_length_normalized_geometric_mean(self):
        s = sample("a", [-math.log(2), -math.log(2)])
        assert sequence_prob(s, length_normalize=True) == pytest.approx(0.5, abs=1e-12)

    def test_empty_sequence(self):
        with pytest.raises(EmptySequence):
            sequence_prob(sample("", []))


class TestClustering:
    def test_full_agreement(self):
        samples = [sample(t, [-0.1]) for t in ("a", "b", "c")]
        nli = RelationNli([("a", "b"), ("a", "c"), ("b", "c")])
        classes = cluster_responses(samples, nli)
        assert len(classes) == 1
        assert classes[0].member_indices == [0, 1, 2]

    def test_full_disagreement(self):
        samples = [sample(t, [-0.1]) for t in ("a", "b", "c")]
        classes = cluster_responses(samples, RelationNli())
        assert [c.member_indices for c in classes] == [[0], [1], [2]]

    def test_sequential_order_a_b_aprime(self):
        # [A, B, A'] with A == A' only: classes [{A, A'}, {B}]
        samples = [sample(t, [-0.1]) for t in ("A", "B", "A'")]
        nli = RelationNli([("A", "A'")])
        classes = cluster_responses(samples, nli)
        assert [c.member_indices for c in classes] == [[0, 2], [1]]
        assert classes[0].representative == "A"

    def test_representative_is_first_member(self):
        samples = [sample(t, [-0.1]) for t in ("x", "y", "z")]
        nli = RelationNli([("x", "y"), ("x", "z"), ("y", "z")])
        classes = cluster_responses(samples, nli)
        assert classes[0].representative == "x"

    @given(
        seed=st.integers(0, 10_000),
        n=st.integers(min_value=1, max_value=6),
    )
    @settings(max_examples=200, deadline=None)
    def test_matches_brute_force_partition(self, seed, n):
        # a random partition induces a transitive, symmetric oracle
        import random

        rng = random.Random(seed)
        texts = [f"t{i}" for i in range(n)]
        groups: list[list[str]] = []
        for t in texts:
            if groups and rng.random() < 0.6:
                rng.choice(groups).append(t)
            else:
                groups.append([t])
        nli = RelationNli.from_partition(groups)
        samples = [sample(t, [-0.1]) for t in texts]
        classes = cluster_responses(samples, nli)
        got = {frozenset(c.member_indices) for c in classes}
        with_oracle = brute_force_partition(
            n, lambda i, j: any(texts[i] in g and texts[j] in g for g in groups)
        )
        assert got == with_oracle

    def test_empty_samples_rejected(self):
        with pytest.raises(InvalidConfig):
            cluster_responses([], RelationNli())


class TestSpdFromSamples:
    def test_hand_aggregation_fixture(self):
        # two merged samples at probs 0.2 and 0.1, one loner at 0.05
        samples = [
            sample("A", [math.log(0.2)]),
            sample("A2", [math.log(0.1)]),
            sample("B", [math.log(0.05)]),
        ]
        spd = spd_from_samples(samples, RelationNli([("A", "A2")]))
        assert not spd.degenerate
        assert spd.probs[0] == pytest.approx(6 / 7, abs=1e-12)
        assert spd.probs[1] == pytest.approx(1 / 7, abs=1e-12)

    def test_single_class_normalizes_to_one(self):
        samples = [sample("same", [-0.4]), sample("same", [-2.0])]
        spd = spd_from_samples(samples, RelationNli())
        assert spd.probs == [1.0]

    def test_all_underflow_falls_back_to_uniform(self):
        samples = [sample("a", [-1000.0]), sample("b", [-1000.0])]
        spd = spd_from_samples(samples, RelationNli())
        assert spd.degenerate
        assert spd.probs == [0.5, 0.5]

    def test_raw_masses_skip_normalization(self):
        samples = [sample("a", [math.log(0.2)]), sample("b", [math.log(0.1)])]
        spd = spd_from_samples(samples, RelationNli(), raw_masses=True)
        assert not spd.normalized
        assert spd.probs == pytest.approx([0.2, 0.1], abs=1e-12)

    @given(
        lps=st.lists(st.floats(min_value=-30.0, max_value=0.0), min_size=2, max_size=8),
    )
    @settings(max_examples=100, deadline=None)
    def test_masses_and_normalization_invariants(self, lps):
        samples = [sample(f"t{i}", [lp]) for i, lp in enumerate(lps)]
        spd = spd_from_samples(samples, RelationNli())
        # class count within [1, M]
        assert 1 <= len(spd.classes) <= len(samples)
        # class masses equal summed member sequence probabilities
        for cls in spd.classes:
            expected = math.fsum(math.exp(lps[i]) for i in cls.member_indices)
            assert cls.mass == pytest.approx(expected, abs=1e-12)
        assert math.fsum(spd.probs) == pytest.approx(1.0, abs=1e-9)


class TestEstimateSpd:
    def _scripted_backend(self, question, texts_lps, seeds):
        script = {"generation": {"*": {question: {"by_seed": {
            str(seed): {"text": t, "logprobs": [lp]}
            for seed, (t, lp) in zip(seeds, texts_lps)
        }}}}}
        return ScriptedVlmBackend(script)

    def test_end_to_end_three_samples(self):
        question = "Q?"
        img = gradient_image()
        seeds = [11, 22, 33]
        vlm = self._scripted_backend(
            question,
            [("A", math.log(0.2)), ("A2", math.log(0.1)), ("B", math.log(0.05))],
            seeds,
        )
        nli = RelationNli([
            (f"Question: {question} Answer: A", f"Question: {question} Answer: A2"),
        ])
        cfg = SamplingConfig(m_samples=3)
        spd = estimate_spd(img, question, cfg, vlm, nli, seeds=seeds,
                           weak=WeakTransformConfig(enabled=False))
        assert spd.probs == pytest.approx([6 / 7, 1 / 7], abs=1e-12)

    def test_seed_count_must_match_m(self):
        cfg = SamplingConfig(m_samples=3)
        with pytest.raises(InvalidConfig):
            estimate_spd(gradient_image(), "q", cfg, None, None, seeds=[1, 2])

    def test_m_below_two_rejected(self):
        with pytest.raises(InvalidConfig):
            SamplingConfig(m_samples=1).validate()

    def test_weak_transforms_vary_payload_images(self, queue_vlm):
        results = [GenerationResult.from_lists("t", [-0.1]) for _ in range(3)]
        vlm = queue_vlm(results)
        img = gradient_image()
        samples = draw_branch_samples(
            img, "q", SamplingConfig(m_samples=3), vlm,
            seeds=[1, 2, 3], weak=WeakTransformConfig(),
        )
        digests = {image_digest(r.image_png) for r in vlm.requests}
        assert len(digests) == 3  # each sample saw a differently transformed image
        assert [s.transform_seed for s in samples] == [1, 2, 3]
        assert [r.seed for r in vlm.requests] == [1, 2, 3]
