from __future__ import annotations

import json
import random

import pytest

from cangraph import stats
from cangraph.detector import (
    BaseHypothesis,
    Centering,
    DetectionError,
    HypothesisFormatError,
    TrainingError,
    TriggeredBy,
    detect,
    evaluate_population,
    load_hypothesis,
    population_windows,
    save_hypothesis,
    train,
)
from cangraph.graph import WindowGraph, extract_edge_counts, graph_from_ids
from cangraph.stats import BinLayout, BinnedDistribution
from oracles import chi_brute, median_sorted, population_sigma


def fake_graphs(edge_counts, window_size=200):
    """Window graphs carrying only the given edge counts."""
    out = []
    for i, n in enumerate(edge_counts):
        edges = frozenset((k, k + 1) for k in range(n))
        nodes = frozenset(range(n + 1))
        out.append(WindowGraph(i, nodes, edges, 2 if n > 1 else n, 0, window_size))
    return out


def normal_counts(n, seed, mean=44, sd=3.5):
    rng = random.Random(seed)
    return [max(1, round(rng.gauss(mean, sd))) for _ in range(n)]


def test_train_totals_and_layout():
    counts = normal_counts(1000, 1)
    h = train(fake_graphs(counts))
    assert h.base_distribution.total == 1000
    assert h.layout.median_null == median_sorted(counts)
    assert h.layout.sigma_null == pytest.approx(population_sigma(counts), rel=1e-12)
    assert h.window_size == 200 and h.population_size == 50


def test_synthetic_vehicle_hypothesis(hypothesis, clean_graphs):
    counts = extract_edge_counts(clean_graphs[:500])
    assert hypothesis.layout.median_null == 44.0
    assert hypothesis.layout.sigma_null == pytest.approx(population_sigma(counts), rel=1e-12)
    # frozen regression values of the seed-42 synthetic vehicle
    assert hypothesis.layout.sigma_null == pytest.approx(3.498, abs=5e-4)
    assert hypothesis.base_distribution.counts == (14, 46, 145, 203, 69, 23)


def test_train_errors():
    with pytest.raises(TrainingError, match="at least 50"):
        train(fake_graphs(normal_counts(49, 2)))
    with pytest.raises(TrainingError, match="at least 10"):
        train(fake_graphs(normal_counts(9, 2)), population_size=5)
    with pytest.raises(TrainingError, match="widen"):
        train(fake_graphs([44] * 60))
    with pytest.raises(TrainingError, match="mix window sizes"):
        train(fake_graphs(normal_counts(30, 2)) + fake_graphs(normal_counts(30, 3), window_size=100))


def test_hypothesis_invariants():
    base = BinnedDistribution((1, 2, 3, 4, 5, 6))
    with pytest.raises(TrainingError):
        BaseHypothesis(BinLayout(44, 3), base, 200, population_size=50)
    with pytest.raises(TrainingError):
        BaseHypothesis(BinLayout(44, 0.0), base, 200, population_size=10)


def test_population_windows_drop_partial():
    pops = population_windows(fake_graphs(list(range(1, 131))), 50)
    assert [p.first_window_index for p in pops] == [0, 50]
    assert all(len(p.edge_counts) == 50 for p in pops)


def test_evaluate_population_matches_oracle():
    h = train(fake_graphs(normal_counts(500, 4)))
    test = normal_counts(50, 5)
    for centering in Centering:
        chi, median_attacked, median = evaluate_population(h, test, 0.01, centering)
        layout = h.layout if centering is Centering.BASE else stats.recentred_layout(h.layout, median)
        observed = [0] * 6
        for v in test:
            observed[stats.bin_index(v, layout)] += 1
        assert chi.statistic == pytest.approx(chi_brute(observed, list(h.base_distribution.counts)), rel=1e-9)
        assert median == median_sorted(test)
        assert median_attacked == (median > h.layout.median_null + 3 * h.layout.sigma_null)


def test_test_centring_separates_location_from_shape():
    h = train(fake_graphs(normal_counts(2000, 6)))
    shifted = [c + 6 for c in normal_counts(50, 7)]
    chi_base, med_base, _ = evaluate_population(h, shifted, 0.01, Centering.BASE)
    chi_test, med_test, _ = evaluate_population(h, shifted, 0.01, Centering.TEST)
    assert chi_base.rejected and not chi_test.rejected
    assert med_base == med_test


def test_null_populations_rarely_flagged(hypothesis, clean_graphs):
    verdicts = detect(hypothesis, clean_graphs[500:1500], 0.01)
    assert len(verdicts) == 20
    assert sum(v.is_attacked for v in verdicts) <= 2


def test_verdict_invariants_and_order():
    h = train(fake_graphs(normal_counts(500, 8)))
    shifted = [c + 20 for c in normal_counts(50, 10)]  # location moves, shape stays
    heavy_tails = [20] * 15 + [44] * 20 + [70] * 15  # median stays, shape breaks
    counts = normal_counts(100, 9) + shifted + heavy_tails + normal_counts(49, 11)  # partial tail dropped
    verdicts = detect(h, fake_graphs(counts), 0.01)
    assert [v.population_index for v in verdicts] == [0, 1, 2, 3]
    assert [v.first_window_index for v in verdicts] == [0, 50, 100, 150]
    for v in verdicts:
        assert v.is_attacked == (v.chi_attacked or v.median_attacked)
        assert (v.triggered_by is TriggeredBy.NONE) == (not v.is_attacked)
        if v.chi_attacked:
            assert v.triggered_by is TriggeredBy.CHI
        elif v.median_attacked:
            assert v.triggered_by is TriggeredBy.MEDIAN
        assert v.elapsed >= 0
    assert verdicts[2].median_attacked and verdicts[2].triggered_by is TriggeredBy.MEDIAN
    assert verdicts[3].chi_attacked


def test_detect_deterministic_and_monotone_in_los():
    h = train(fake_graphs(normal_counts(500, 12)))
    graphs = fake_graphs(normal_counts(2000, 13, sd=4.5))
    for centering in Centering:
        runs = {los: detect(h, graphs, los, centering) for los in stats.SUPPORTED_LOS}
        assert detect(h, graphs, 0.01, centering) == runs[0.01]
        for strict, loose in ((0.001, 0.01), (0.01, 0.05), (0.05, 0.1)):
            for a, b in zip(runs[strict], runs[loose]):
                assert not a.chi_attacked or b.chi_attacked


def test_detect_errors():
    h = train(fake_graphs(normal_counts(100, 14)))
    with pytest.raises(DetectionError, match="at least 50"):
        detect(h, fake_graphs(normal_counts(49, 15)))
    with pytest.raises(DetectionError, match="window size"):
        detect(h, fake_graphs(normal_counts(60, 15), window_size=100))
    with pytest.raises(stats.UnsupportedLevelError):
        detect(h, fake_graphs(normal_counts(60, 15)), 0.2)


def test_hypothesis_round_trip(hypothesis):
    text = save_hypothesis(hypothesis)
    loaded = load_hypothesis(text)
    assert loaded == hypothesis
    assert loaded.layout.sigma_null == hypothesis.layout.sigma_null  # full precision, not 15 digits
    assert save_hypothesis(loaded) == text
    doc = json.loads(text)
    assert doc["boundaries"] == list(hypothesis.layout.boundaries)
    assert doc["base_total"] == 500


def test_hypothesis_load_errors(hypothesis):
    text = save_hypothesis(hypothesis)
    with pytest.raises(HypothesisFormatError, match="truncated"):
        load_hypothesis(text[: len(text) // 2])
    doc = json.loads(text)
    for key, value in (
        ("version", 99),
        ("format", "something-else"),
        ("sigma_null", "abc"),
        ("base_counts", [1, 2, 3]),
        ("base_total", 7),
        ("boundaries", [0, 1, 2, 3, 4, 5, 6]),
    ):
        bad = dict(doc, **{key: value})
        with pytest.raises(HypothesisFormatError):
            load_hypothesis(json.dumps(bad))
    missing = {k: v for k, v in doc.items() if k != "median_null"}
    with pytest.raises(HypothesisFormatError):
        load_hypothesis(json.dumps(missing))


def test_small_windows_and_populations():
    rng = random.Random(21)
    small = [graph_from_ids([rng.randrange(12) for _ in range(40)], i) for i in range(60)]
    h = train(small, population_size=20)
    assert len(detect(h, small, 0.1)) == 3
