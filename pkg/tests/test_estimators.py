import json
import math

import numpy as np
import pytest

from o2clusters.estimators import (
    STANDARD,
    InsufficientDataError,
    ObservableSeries,
    batch_means,
    bootstrap_ratio,
    measure_connect_both,
    measure_connect_boundary,
    measure_cos_k,
    ratio_with_ci,
    series_csv,
    standard_observables,
    summary,
    summary_json,
    two_point_connect,
)
from o2clusters.graph import Graph, build_box
from o2clusters.kernels import Villain
from o2clusters.spins import SpinConfig


def ar1(n, phi, rng, mean=0.0):
    x = np.empty(n)
    x[0] = rng.normal()
    for i in range(1, n):
        x[i] = phi * x[i - 1] + rng.normal()
    return x + mean


def test_cos_k_examples():
    g = build_box(2, 3)
    cfg = SpinConfig(g, Villain(1.0), np.zeros(g.n))
    assert measure_cos_k(cfg, 4, 1) == 1.0
    cfg.theta[4] = math.pi / 2
    assert measure_cos_k(cfg, 4, 2) == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        measure_cos_k(cfg, 4, 3)


def test_connectivity_examples():
    g = build_box(2, 4)
    cfg = SpinConfig.new(g, Villain(1.0))
    x = g.index(1, 1)
    on, off = np.ones(g.n_edges, bool), np.zeros(g.n_edges, bool)
    assert measure_connect_boundary(cfg, on, x) == 1
    assert measure_connect_boundary(cfg, off, x) == 0
    assert measure_connect_both(cfg, (on, on), x) == 1
    assert measure_connect_both(cfg, (on, off), x) == 0


def test_two_point_examples():
    g = build_box(2, 3, bc="torus")
    cfg = SpinConfig.new(g, Villain(1.0))
    rng = np.random.default_rng(0)
    assert two_point_connect(cfg, 2, 2, rng) == 1
    assert two_point_connect(cfg, 0, 4, rng, bonds=np.zeros(g.n_edges, bool)) == 0
    assert two_point_connect(cfg, 0, 4, rng, bonds=np.ones(g.n_edges, bool)) == 1


def test_standard_observables_aligned_config():
    g = build_box(2, 4)
    cfg = SpinConfig.new(g, Villain(0.3), boundary_angle=1.0)
    obs = standard_observables(cfg, g.index(1, 2), np.random.default_rng(0), reference=1.0)
    assert set(obs) == set(STANDARD)
    assert obs["cos1"] == 1.0 and obs["cos2"] == 1.0
    assert obs["cos1_disconnected"] == 1 - obs["connect"]


def test_constant_series_exact():
    e = batch_means(np.full(320, 2.5))
    assert e.mean == 2.5 and e.err == 0.0
    r = ratio_with_ci(np.full(320, 1.0), np.full(320, 2.0))
    assert r.ratio == 0.5 and r.ratio_err == 0.0
    assert r.within(0, 1)


def test_zero_denominator():
    with pytest.raises(ZeroDivisionError):
        ratio_with_ci(np.ones(64), np.zeros(64))
    rng = np.random.default_rng(1)
    with pytest.raises(ZeroDivisionError):
        ratio_with_ci(np.ones(6400), rng.normal(size=6400))


def test_batch_count_checks():
    with pytest.raises(ValueError):
        batch_means(np.ones(100), n_batches=8)
    with pytest.raises(InsufficientDataError):
        batch_means(np.ones(10))
    with pytest.raises(ValueError):
        ratio_with_ci(np.ones(64), np.ones(65))


def test_batch_error_covers_correlated_mean():
    # the batch-means error of an AR(1) mean tracks its long-run standard deviation
    rng = np.random.default_rng(2)
    phi, n = 0.8, 64_000
    truth = math.sqrt(1 / (1 - phi) ** 2 / n)
    errs = [batch_means(ar1(n, phi, rng)).err for _ in range(20)]
    assert 0.8 < np.mean(errs) / truth < 1.2


def test_delta_method_matches_bootstrap():
    rng = np.random.default_rng(3)
    for _ in range(5):
        common = ar1(32_000, 0.6, rng)
        num = 3.0 + 0.5 * common + 0.3 * rng.normal(size=32_000)
        den = 5.0 + 0.4 * common + 0.3 * rng.normal(size=32_000)
        delta = ratio_with_ci(num, den).ratio_err
        boot = bootstrap_ratio(num, den, n_resamples=10_000, rng=rng)
        assert abs(delta / boot - 1) < 0.1


def test_series_must_be_finite():
    with pytest.raises(ValueError):
        ObservableSeries("x", [1.0, float("nan")])


def test_summary_and_csv():
    rng = np.random.default_rng(4)
    series = {name: ObservableSeries(name, rng.random(64) + 0.5) for name in STANDARD}
    out = summary(series)
    assert {"ratio_k1", "ratio_k2"} <= set(out)
    assert out["cos1"]["batches"] == 32
    doc = json.loads(summary_json(out, {"seed": 1}))
    assert doc["metadata"]["seed"] == 1
    text = series_csv({"cos1": series["cos1"]}, range(1, 65))
    lines = text.splitlines()
    assert lines[0] == "sweep_index,observable,value"
    assert float(lines[1].split(",")[2]) == series["cos1"].values[0]


def test_two_point_free_graph_rotation_invariance():
    # a globally rotated configuration gives the same bond law
    g = Graph.from_edges(3, [(0, 1), (1, 2)], bc="free")
    theta = np.array([0.2, 0.5, 0.4])
    hits = []
    for shift in (0.0, 2.0):
        cfg = SpinConfig(g, Villain(0.6), theta + shift)
        rng = np.random.default_rng(5)
        hits.append(sum(two_point_connect(cfg, 0, 2, rng) for _ in range(2000)))
    assert hits[0] == hits[1]
