"""Acceptance suite: one test per release criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. Expected values marked "oracle" are computed by independent
closed-form or brute-force implementations inside this module, never by the
code under test.
"""

import dataclasses
import math
import random
import time
from fractions import Fraction

import numpy as np
import pytest

from univrse import harness
from univrse.alfa import AlfaLabel
from univrse.backends import MockServer, load_script
from univrse.metrics import ScoredSample, auc, aua
from univrse.mockdata import build_contrast_scenario, write_vqa_fixture
from univrse.semantic import GenSample, cluster_responses, spd_from_samples
from univrse.vcse import calibrate_threshold, contrast_distributions, run_contrast_pipeline

from conftest import RelationNli


def _report(n: int, text: str) -> None:
    print(f"PASS criterion {n:02d}: {text}")


# --- independent oracles -----------------------------------------------------

def oracle_softmax(logits):
    m = max(logits)
    exps = [math.exp(x - m) for x in logits]
    total = math.fsum(exps)
    return [e / total for e in exps]


def oracle_entropy(probs):
    return -math.fsum(p * math.log(p) for p in probs if p > 0)


def oracle_auc(samples):
    correct = [s.confidence for s in samples if not s.binary_halluc]
    halluc = [s.confidence for s in samples if s.binary_halluc]
    wins = sum(1 for c in correct for h in halluc if c > h)
    ties = sum(1 for c in correct for h in halluc if c == h)
    return (wins + 0.5 * ties) / (len(correct) * len(halluc))


def oracle_partition(n, equivalent):
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


def oracle_youden(scores, labels):
    distinct = sorted(set(scores))
    n_pos, n_neg = sum(labels), len(labels) - sum(labels)
    best_tau, best_j = None, -math.inf
    for lo, hi in zip(distinct, distinct[1:]):
        tau = (lo + hi) / 2
        tpr = sum(1 for s, y in zip(scores, labels) if y and s > tau) / n_pos
        tnr = sum(1 for s, y in zip(scores, labels) if not y and s <= tau) / n_neg
        if tpr + tnr - 1 > best_j:
            best_tau, best_j = tau, tpr + tnr - 1
    return best_tau


# oracle values for the scripted contrast scenarios
VSE_PRIOR_TWO = oracle_entropy(oracle_softmax([1.0, 0.0]))   # 0.582203...
VSE_GROUNDED = oracle_entropy(oracle_softmax([2.0, -1.0]))   # 0.190865...


# --- shared end-to-end artifacts ---------------------------------------------

@pytest.fixture(scope="module")
def http_runs(tmp_path_factory):
    """The ten-record mock dataset, run twice through the real HTTP stack
    against an in-process OpenAI-compatible server."""
    root = tmp_path_factory.mktemp("acceptance")
    fixture = write_vqa_fixture(root / "fixture")
    server = MockServer(load_script(fixture.script_path)).start()
    try:
        spec = harness.BackendSpec(kind="http", endpoint=server.url, model="mock")
        config = dataclasses.replace(
            harness.load_config(fixture.config_path),
            vlm=spec, nli=spec, llm=spec, workers=4,
        )
        records = harness.ingest_dataset(fixture.dataset_path)
        backends = harness.build_backends(config)

        started = time.perf_counter()
        run_a = harness.run(records, config, backends, root / "run_a")
        harness.report(run_a)
        elapsed = time.perf_counter() - started

        run_b = harness.run(records, config, backends, root / "run_b")
        harness.report(run_b)
    finally:
        server.stop()
    return {"run_a": run_a, "run_b": run_b, "elapsed": elapsed}


def _scores_by_id(run_dir):
    out = {}
    for rec in harness._load_records(run_dir):
        out[rec["id"]] = {s["method"]: s["value"] for s in rec["scores"]}
    return out


def test_criterion_01_lambda_zero_reduction():
    rng = np.random.default_rng(1)
    started = time.perf_counter()
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        p = rng.dirichlet(np.ones(n)).tolist()
        p_prime = rng.dirichlet(np.ones(n)).tolist()
        got = contrast_distributions(p, p_prime, 0.0)
        want = oracle_softmax(p)
        assert max(abs(g - w) for g, w in zip(got, want)) <= 1e-12
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0
    _report(1, f"lambda=0 reduces to softmax(p) on 1000 pairs in {elapsed:.3f}s")


def test_criterion_02_anchor_invariance():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        p = rng.dirichlet(np.ones(n)).tolist()
        want = oracle_softmax(p)
        for lam in (0.0, 0.5, 1.0, 2.0):
            got = contrast_distributions(p, p, lam)
            assert max(abs(g - w) for g, w in zip(got, want)) <= 1e-12
    _report(2, "contrast(p, p, lambda) = softmax(p) for 1000 p x 4 lambdas")


def test_criterion_03_closed_form_vse_values():
    started = time.perf_counter()
    values = {}
    for kind in ("prior_two", "grounded"):
        img, q, cfg, vlm, nli = build_contrast_scenario(kind)
        outcome = run_contrast_pipeline(img, q, cfg, vlm, nli)
        values[kind] = outcome.score.value
    # oracle: H(softmax(1,0)) and H(softmax(2,-1))
    assert values["prior_two"] == pytest.approx(VSE_PRIOR_TWO, abs=1e-9)
    assert values["grounded"] == pytest.approx(VSE_GROUNDED, abs=1e-9)
    assert values["prior_two"] == pytest.approx(0.582203, abs=1e-6)
    assert values["grounded"] == pytest.approx(0.190865, abs=1e-6)
    assert values["prior_two"] > values["grounded"]
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0
    _report(3, f"prior-driven {values['prior_two']:.6f} > grounded "
               f"{values['grounded']:.6f} in {elapsed:.3f}s")


def test_criterion_04_entropy_bounds(http_runs):
    checked = 0
    for kind in ("prior_single", "prior_two", "grounded"):
        img, q, cfg, vlm, nli = build_contrast_scenario(kind)
        score = run_contrast_pipeline(img, q, cfg, vlm, nli).score
        assert 0.0 <= score.value <= math.log(score.n_classes) + 1e-9
        checked += 1
    for run_dir in (http_runs["run_a"], http_runs["run_b"]):
        for rec in harness._load_records(run_dir):
            vse = rec["univrse"]["vse"]
            assert 0.0 <= vse["value"] <= math.log(vse["n_classes"]) + 1e-9
            checked += 1
    _report(4, f"0 <= VSE <= ln(N) held for all {checked} produced VSDs")


def test_criterion_05_spd_hand_aggregation():
    samples = [
        GenSample("A", (math.log(0.2),), math.log(0.2), 0),
        GenSample("A2", (math.log(0.1),), math.log(0.1), 1),
        GenSample("B", (math.log(0.05),), math.log(0.05), 2),
    ]
    spd = spd_from_samples(samples, RelationNli([("A", "A2")]))
    assert abs(spd.probs[0] - 6 / 7) <= 1e-12
    assert abs(spd.probs[1] - 1 / 7) <= 1e-12
    _report(5, "M=3 fixture aggregates to (6/7, 1/7) within 1e-12")


def test_criterion_06_clustering_matches_partition_oracle():
    rng = random.Random(6)
    for trial in range(200):
        n = rng.randint(1, 6)
        texts = [f"t{trial}_{i}" for i in range(n)]
        groups = []
        for t in texts:
            if groups and rng.random() < 0.55:
                rng.choice(groups).append(t)
            else:
                groups.append([t])
        nli = RelationNli.from_partition(groups)
        samples = [GenSample(t, (-0.1,), -0.1, i) for i, t in enumerate(texts)]
        got = {frozenset(c.member_indices) for c in cluster_responses(samples, nli)}
        want = oracle_partition(
            n, lambda i, j: any(texts[i] in g and texts[j] in g for g in groups)
        )
        assert got == want
    _report(6, "sequential clustering equals brute-force partition on 200 relations")


def test_criterion_07_auc_matches_pair_counting():
    rng = random.Random(7)
    checked = 0
    while checked < 500:
        n = rng.randint(2, 200)
        samples = []
        for i in range(n):
            halluc = rng.random() < 0.5
            conf = rng.choice([rng.uniform(-1, 1), round(rng.uniform(-1, 1), 1)])
            samples.append(ScoredSample(f"s{i:03d}", conf, float(halluc), halluc))
        if all(s.binary_halluc for s in samples) or not any(
            s.binary_halluc for s in samples
        ):
            continue
        assert auc(samples) == oracle_auc(samples)
        checked += 1
    perfect = [
        ScoredSample("a", 0.9, 0.0, False), ScoredSample("b", 0.8, 0.0, False),
        ScoredSample("c", 0.7, 1.0, True), ScoredSample("d", 0.3, 1.0, True),
    ]
    assert auc(perfect) == 1.0
    mixed = [
        ScoredSample("a", 0.6, 0.0, False),
        ScoredSample("b", 0.8, 1.0, True), ScoredSample("c", 0.4, 1.0, True),
    ]
    assert auc(mixed) == 0.5
    _report(7, "auc equals brute-force pair enumeration on 500 instances + fixtures")


def test_criterion_08_aua_fixture_and_invariance():
    two = [
        ScoredSample("a", 0.9, 0.0, False),
        ScoredSample("b", 0.1, 1.0, True),
    ]
    assert aua(two) == 0.25
    rng = random.Random(8)
    for _ in range(100):
        n = rng.randint(1, 60)
        samples = [
            ScoredSample(f"s{i:02d}", rng.uniform(-1, 1), rng.random(), False)
            for i in range(n)
        ]
        base = aua(samples)
        squeezed = [
            ScoredSample(s.id, math.atan(5 * s.confidence), s.alpha_h, s.binary_halluc)
            for s in samples
        ]
        assert aua(squeezed) == pytest.approx(base, abs=1e-12)
    _report(8, "AUA fixture = 0.25 exactly; invariant under monotone transforms")


def test_criterion_09_alfa_arithmetic():
    checked = 0
    for n2 in range(1, 51):
        for m in range(n2 + 1):
            for h in range(n2 - m + 1):
                e = n2 - m - h
                label = AlfaLabel.from_counts(m, h, e)
                assert Fraction(m, n2) + Fraction(h, n2) + Fraction(e, n2) == 1
                assert label.alpha_m == float(Fraction(m, n2))
                assert label.alpha_h == float(Fraction(h, n2))
                assert label.alpha_e == float(Fraction(e, n2))
                assert abs(label.alpha_m + label.alpha_h + label.alpha_e - 1) <= 1e-12
                checked += 1
    fixture = AlfaLabel.from_counts(2, 1, 1)
    assert (fixture.alpha_m, fixture.alpha_h, fixture.alpha_e) == (0.5, 0.25, 0.25)
    _report(9, f"ratios exact for all {checked} (m,h,e) with m+h+e <= 50")


def test_criterion_10_mock_run_univrse_beats_se(http_runs):
    records = harness._load_records(http_runs["run_a"])
    assert len(records) == 10
    assert all(r["error"] is None for r in records)
    by_method = harness.scored_samples_by_method(records, 0.0)
    auc_univrse = auc(by_method["UniVRSE"])
    auc_se = auc(by_method["SE"])
    assert auc_univrse > auc_se
    assert http_runs["elapsed"] < 30.0
    _report(10, f"UniVRSE AUC {auc_univrse:.3f} > SE AUC {auc_se:.3f} "
                f"via HTTP mock server in {http_runs['elapsed']:.2f}s")


def test_criterion_11_replay_determinism(http_runs):
    scores_a = _scores_by_id(http_runs["run_a"])
    scores_b = _scores_by_id(http_runs["run_b"])
    assert scores_a.keys() == scores_b.keys()
    worst = 0.0
    for rid in scores_a:
        assert scores_a[rid].keys() == scores_b[rid].keys()
        for method, value in scores_a[rid].items():
            worst = max(worst, abs(value - scores_b[rid][method]))
            assert abs(value - scores_b[rid][method]) <= 1e-9
    csv_a = (http_runs["run_a"] / "report.csv").read_bytes()
    csv_b = (http_runs["run_b"] / "report.csv").read_bytes()
    assert csv_a == csv_b
    _report(11, f"replay reproduced every score (max drift {worst:.1e}) "
                "and a byte-identical report")


def test_criterion_12_calibration_matches_brute_force():
    rng = random.Random(12)
    checked = 0
    while checked < 50:
        n = rng.randint(4, 60)
        scores = [round(rng.uniform(0, 1), 2) for _ in range(n)]
        labels = [rng.random() < 0.5 for _ in range(n)]
        if len(set(labels)) < 2 or len(set(scores)) < 2:
            continue
        assert calibrate_threshold(scores, labels) == oracle_youden(scores, labels)
        checked += 1
    _report(12, "calibrate_threshold equals brute-force Youden-J on 50 sets")
