import math

import numpy as np
import pytest
from scipy import stats

from o2clusters.graph import Graph, build_box
from o2clusters.kernels import TWO_PI, Villain, XYExp, rho_family
from o2clusters.spins import (
    SpinConfig,
    heat_bath_update,
    load_snapshot,
    metropolis_update,
    parse_snapshot,
    sample_from_grid,
    save_snapshot,
    snapshot_text,
    sweep,
)


def star(weight, angles=(0.0, 1.0, 2.5)):
    """Centre vertex 0 tied to pinned leaves at the given angles."""
    k = len(angles)
    g = Graph.from_edges(k + 1, [(0, i) for i in range(1, k + 1)], boundary=list(range(1, k + 1)))
    return SpinConfig(g, weight, np.array([0.0, *angles]))


def conditional_cdf(weight, angles, m=20000):
    x = (np.arange(m) + 0.5) * TWO_PI / m
    logd = sum(weight.log_weight(x - a) for a in angles)
    d = np.exp(logd - logd.max())
    c = np.concatenate([[0.0], np.cumsum(d)])
    c /= c[-1]
    grid = np.arange(m + 1) * TWO_PI / m
    return lambda s: np.interp(s, grid, c)


@pytest.mark.parametrize("weight", [Villain(0.6), Villain(8.0), XYExp(1.5), rho_family("quadratic", 1.0)])
def test_heat_bath_draws_full_conditional(weight):
    rng = np.random.default_rng(3)
    cfg = star(weight)
    draws = np.empty(20000)
    for i in range(len(draws)):
        heat_bath_update(cfg, 0, rng)
        draws[i] = cfg.theta[0]
    cdf = conditional_cdf(weight, (0.0, 1.0, 2.5))
    assert stats.kstest(draws, cdf).pvalue > 1e-3


def test_metropolis_stationary():
    rng = np.random.default_rng(4)
    w = Villain(0.8)
    cfg = star(w)
    draws = np.empty(40000)
    for i in range(len(draws)):
        metropolis_update(cfg, 0, math.pi / 2, rng)
        draws[i] = cfg.theta[0]
    cdf = conditional_cdf(w, (0.0, 1.0, 2.5))
    # thinning reduces correlation before a KS comparison
    assert stats.kstest(draws[::10], cdf).pvalue > 1e-3


def test_pinned_spins_unchanged():
    rng = np.random.default_rng(0)
    g = build_box(2, 5)
    for w in (Villain(1.0), XYExp(1.0)):
        cfg = SpinConfig.new(g, w, boundary_angle=0.7, init="random", rng=rng)
        before = cfg.theta[g.boundary].copy()
        for scheme in ("heat_bath", "metropolis"):
            sweep(cfg, scheme, rng)
        assert np.array_equal(cfg.theta[g.boundary], before)
        assert not heat_bath_update(cfg, 0, rng)
        assert not metropolis_update(cfg, 0, 1.0, rng)


def test_sample_from_grid_matches_density():
    m = 512
    x = np.arange(m) * TWO_PI / m
    dens = np.exp(2.0 * np.cos(x - 1.0))
    rng = np.random.default_rng(1)
    draws = np.array([sample_from_grid(dens, u) for u in rng.random(20000)])
    cdf = conditional_cdf(XYExp(2.0), (1.0,))
    assert stats.kstest(draws, cdf).pvalue > 1e-3
    assert np.all((draws >= 0) & (draws < TWO_PI))


def test_unknown_sweep_and_init():
    cfg = star(Villain(1.0))
    with pytest.raises(ValueError):
        sweep(cfg, "gibbs", np.random.default_rng(0))
    with pytest.raises(ValueError):
        SpinConfig.new(cfg.graph, Villain(1.0), init="hot")


def test_angles_wrapped():
    cfg = SpinConfig(Graph.from_edges(2, [(0, 1)], bc="free"), Villain(1.0), np.array([-1.0, 7.0]))
    assert np.allclose(cfg.theta, [TWO_PI - 1.0, 7.0 - TWO_PI])


def test_snapshot_round_trip(tmp_path):
    g = build_box(2, 3)
    cfg = SpinConfig.new(g, Villain(1.0), init="random", rng=np.random.default_rng(2))
    save_snapshot(cfg, tmp_path / "s.csv", {"seed": 2}, bonds="0101")
    back, meta = load_snapshot(tmp_path / "s.csv", g, Villain(1.0))
    assert np.array_equal(back.theta, cfg.theta)
    assert np.array_equal(back.pinned, cfg.pinned)
    assert meta == {"seed": "2", "bonds": "0101"}
    theta, _, _ = parse_snapshot(snapshot_text(back))
    assert np.array_equal(theta, cfg.theta)
