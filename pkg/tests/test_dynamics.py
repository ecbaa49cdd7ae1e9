import functools
import json
import math
from pathlib import Path

import numpy as np
import pytest

from o2clusters.dynamics import (
    DynamicsConfig,
    advance,
    cluster_swapping_step,
    default_site,
    run_chain,
    run_chains,
    sweep_indices,
    wolff_step,
)
from o2clusters.estimators import STANDARD
from o2clusters.graph import Graph, build_box
from o2clusters.kernels import Villain, XYExp
from o2clusters.spins import SpinConfig

MANIFEST = json.loads((Path(__file__).parent / "data" / "oracle_manifest.json").read_text())["cases"]


def path3(w):
    g = Graph.from_edges(3, [(0, 1), (1, 2)], boundary=[0])
    return SpinConfig.new(g, w)


@pytest.mark.parametrize("scheme,interleave", [
    ("cluster_swapping", "metropolis"),
    ("cluster_swapping", "heat_bath"),
    ("wolff", "metropolis"),
    ("metropolis_baseline", "none"),
    ("heat_bath_baseline", "none"),
])
def test_schemes_match_oracle_on_path(scheme, interleave):
    cfg = path3(Villain(0.7))
    dyn = DynamicsConfig(scheme, burn_in=200, interleave=interleave)
    series = run_chain(cfg, dyn, rng=np.random.default_rng(1), n_measurements=40_000, site=2)
    for name in STANDARD:
        exact = MANIFEST[f"villain_t0.7/path3/{name}"]["value"]
        est = series[name].estimate()
        assert abs(est.mean - exact) < 3 * est.err + 1e-9, (name, est, exact)


def test_pure_cluster_swapping_preserves_exact_mean():
    # no interleaved sweeps: the swap alone must leave the law invariant
    cfg = SpinConfig.new(Graph.from_edges(3, [(0, 1), (1, 2)], boundary=[0]), Villain(1.0), init="random",
                         rng=np.random.default_rng(0))
    dyn = DynamicsConfig("cluster_swapping", interleave="none", burn_in=0)
    # start from the exact law by heat-bath sampling first
    advance(cfg, DynamicsConfig("heat_bath_baseline", burn_in=0), 50, np.random.default_rng(2))
    vals = []
    rng = np.random.default_rng(3)
    for _ in range(2000):
        advance(cfg, DynamicsConfig("heat_bath_baseline", burn_in=0), 5, rng)
        advance(cfg, dyn, 3, rng)
        vals.append(math.cos(cfg.theta[2]))
    vals = np.array(vals)
    assert abs(vals.mean() - math.exp(-1.0)) < 4 * vals.std() / math.sqrt(len(vals))


def test_cluster_step_record_and_pinned():
    g = build_box(2, 5)
    cfg = SpinConfig.new(g, Villain(1.0), boundary_angle=0.3, init="random", rng=np.random.default_rng(4))
    before = cfg.theta[g.boundary].copy()
    rng = np.random.default_rng(5)
    for _ in range(20):
        _, rec = cluster_swapping_step(cfg, rng, record=True)
        assert 0 <= rec.nu < 2 * math.pi
        assert rec.bonds.shape == (g.n_edges,)
        assert not rec.flipped[g.boundary].any()
        wolff_step(cfg, rng)
    assert np.array_equal(cfg.theta[g.boundary], before)


def test_wolff_cluster_size_bounds():
    g = build_box(2, 5, bc="torus")
    cfg = SpinConfig.new(g, XYExp(2.0), init="aligned")
    rng = np.random.default_rng(6)
    sizes = [wolff_step(cfg, rng) for _ in range(50)]
    assert all(0 <= s <= g.n for s in sizes)
    assert max(sizes) > 1


def test_same_seed_same_chain():
    g = build_box(2, 4)
    dyn = DynamicsConfig(burn_in=50, interleave="metropolis")
    a = run_chain(SpinConfig.new(g, Villain(1.0)), dyn, rng=7, n_measurements=200)
    b = run_chain(SpinConfig.new(g, Villain(1.0)), dyn, rng=7, n_measurements=200)
    for name in STANDARD:
        assert np.array_equal(a[name].values, b[name].values)


def test_callable_observables_follow_compiled_path():
    g = build_box(2, 4)
    dyn = DynamicsConfig(burn_in=20, interleave="metropolis")

    def sin1(cfg):
        return math.sin(cfg.theta[5])

    a = run_chain(SpinConfig.new(g, Villain(1.0)), dyn, rng=8, n_measurements=100)
    b = run_chain(SpinConfig.new(g, Villain(1.0)), dyn, STANDARD + (sin1,), rng=8, n_measurements=100)
    assert "sin1" in b
    for name in STANDARD:
        assert np.array_equal(a[name].values, b[name].values)


def test_chains_independent_of_worker_count():
    g = build_box(2, 4)
    make = functools.partial(SpinConfig.new, g, Villain(0.9))
    dyn = DynamicsConfig(burn_in=20, interleave="metropolis")
    one = run_chains(make, dyn, n_measurements=100, seed=3, n_chains=3, workers=1)
    many = run_chains(make, dyn, n_measurements=100, seed=3, n_chains=3, workers=3)
    for name in STANDARD:
        assert one[name].values.tobytes() == many[name].values.tobytes()
    assert len(one["cos1"]) == 300


def test_config_validation():
    with pytest.raises(ValueError):
        DynamicsConfig("glauber")
    with pytest.raises(ValueError):
        DynamicsConfig(interleave="random")
    with pytest.raises(ValueError):
        DynamicsConfig(sweeps_between_measurements=0)
    with pytest.raises(ValueError):
        run_chain(path3(Villain(1.0)), DynamicsConfig(), n_measurements=0)
    with pytest.raises(ValueError):
        run_chain(path3(Villain(1.0)), DynamicsConfig(), ("energy",), n_measurements=10)


def test_helpers():
    assert default_site(build_box(2, 8)) == build_box(2, 8).index(4, 4)
    assert default_site(Graph.from_edges(3, [(0, 1), (1, 2)], boundary=[0])) == 1
    idx = sweep_indices(DynamicsConfig(burn_in=10, sweeps_between_measurements=3), 4)
    assert idx.tolist() == [13, 16, 19, 22]
