import dataclasses
import math
from pathlib import Path

import numpy as np
import pytest
from scipy.special import iv

from o2clusters.estimators import two_point_connect
from o2clusters.graph import Graph, build_box
from o2clusters.kernels import Villain, XYExp
from o2clusters.oracle import (
    BudgetExceededError,
    Manifest,
    OracleSpec,
    build_manifest,
    exact_dilute_potts,
    exact_o2_expectation,
    exact_o2_many,
    potts_fk_two_point,
    quadrature,
    xy_single_neighbor_cos,
)
from o2clusters.potts import DilutePottsParams, fk_limit_params, invariant_measure
from o2clusters.spins import SpinConfig

MANIFEST = Path(__file__).parent / "data" / "oracle_manifest.json"


def path_spec(n_free, w, site=None, M=64):
    g = Graph.from_edges(n_free + 1, [(i, i + 1) for i in range(n_free)], boundary=[0])
    return OracleSpec(g, weight=w, site=n_free if site is None else site, M=M)


def test_quadrature_rules_integrate_trig():
    for rule in ("octant", "trapezoid"):
        x, w = quadrature(64, rule)
        assert abs(w.sum() - 2 * math.pi) < 1e-13
        assert abs(np.dot(w, np.cos(3 * x) ** 2) - math.pi) < 1e-12


def test_frozen_manifest_matches_rebuild():
    frozen = Manifest.load(MANIFEST).cases
    fresh = build_manifest().cases
    assert set(frozen) == set(fresh)
    for key, case in frozen.items():
        assert abs(case["value"] - fresh[key]["value"]) < 1e-12, key


def test_grid_doubling_error_small_for_all_cases():
    for key, case in Manifest.load(MANIFEST).cases.items():
        assert case["error"] < 1e-8, key


@pytest.mark.parametrize("t", [0.7, 1.5])
@pytest.mark.parametrize("n_free", [1, 2, 3])
def test_villain_path_closed_forms(t, n_free):
    # spins along a pinned path add independent wrapped Gaussian increments
    spec = path_spec(n_free, Villain(t), M=32 if n_free == 3 else 64)
    vals = exact_o2_many(spec, ("cos1", "cos2"))
    assert abs(vals["cos1"].value - math.exp(-n_free * t / 2)) < 1e-12
    assert abs(vals["cos2"].value - math.exp(-2 * n_free * t)) < 1e-12


def test_xy_path_closed_form():
    beta = 1.7
    spec = path_spec(2, XYExp(beta))
    val = exact_o2_expectation(spec, "cos2").value
    assert abs(val - (iv(2, beta) / iv(0, beta)) ** 2) < 1e-12


def test_xy_single_neighbor_bessel_ratio():
    spec = path_spec(1, XYExp(1.0))
    val = exact_o2_expectation(spec, "cos1")
    assert val.error < 1e-10
    assert abs(val.value - xy_single_neighbor_cos(1.0)) < 1e-12


def test_isolated_vertex_mean_zero():
    spec = OracleSpec(Graph.from_edges(1, [], bc="free"), weight=Villain(1.0), site=0)
    assert abs(exact_o2_expectation(spec, "cos1").value) < 1e-15


@pytest.mark.parametrize("w", [Villain(0.7), Villain(1.5), XYExp(0.8)])
def test_two_vertex_bounds_and_zero_means(w):
    vals = exact_o2_many(path_spec(1, w))
    for num, den in (("cos1", "connect"), ("cos2", "connect_both")):
        assert 0 < vals[num].value / vals[den].value <= 1
    assert abs(vals["cos1_disconnected"].value) < 1e-8
    assert abs(vals["cos2_not_both"].value) < 1e-8


def test_four_free_vertices_zero_means():
    # the reflections map the octant grid to itself, so the identities hold on any grid
    g = Graph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 0), (3, 4)], boundary=[0])
    spec = OracleSpec(g, weight=Villain(1.0), site=2, M=8)
    vals = exact_o2_many(spec, ("cos1_disconnected", "cos2_not_both", "connect"))
    assert abs(vals["cos1_disconnected"].value) < 1e-8
    assert abs(vals["cos2_not_both"].value) < 1e-8


def test_budget_and_size_limits():
    g = build_box(1, 9, bc="wired")
    with pytest.raises(BudgetExceededError):
        OracleSpec(g, weight=Villain(1.0))
    spec = OracleSpec(build_box(1, 6), weight=Villain(1.0), budget=1000)
    with pytest.raises(BudgetExceededError):
        exact_o2_expectation(spec, "cos1")
    with pytest.raises(ValueError):
        OracleSpec(build_box(1, 3), weight=Villain(1.0), M=48)
    with pytest.raises(ValueError):
        exact_o2_expectation(path_spec(1, Villain(1.0)), "sin1")


def test_two_point_oracle_and_exact_sampling():
    # free 2-vertex Villain graph: theta_0 uniform, theta_1 = theta_0 + N(0, t)
    t = 0.8
    g = Graph.from_edges(2, [(0, 1)], bc="free")
    spec = OracleSpec(g, weight=Villain(t), site=0, other=1)
    cos = exact_o2_expectation(spec, "two_point_cos")
    assert abs(cos.value - math.exp(-t / 2)) < 1e-12
    conn = exact_o2_expectation(spec, "two_point_connect")
    assert 0 < cos.value / conn.value <= 1
    rng = np.random.default_rng(9)
    n = 20_000
    hits = 0
    for _ in range(n):
        a = rng.uniform(0, 2 * math.pi)
        cfg = SpinConfig(g, Villain(t), np.array([a, a + rng.normal(0, math.sqrt(t))]))
        hits += two_point_connect(cfg, 0, 1, rng)
    sd = math.sqrt(conn.value * (1 - conn.value) / n)
    assert abs(hits / n - conn.value) < 3 * sd


def dp_path(n, Q, lam, t, u=1.0):
    g = Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)], bc="free")
    return OracleSpec(g, params=DilutePottsParams(Q, lam, t, u), site=0, other=n - 1)


@pytest.mark.parametrize("Q,lam,t,u", [(2, 1.0, 1.0, 1.0), (3, 0.4, 0.7, 2.0), (1, 2.0, 0.5, 1.0)])
def test_dilute_connectivity_identity_exact(Q, lam, t, u):
    spec = dp_path(3, Q, lam, t, u)
    assert abs(exact_dilute_potts(spec, "tau_lhs") - exact_dilute_potts(spec, "tau_rhs")) < 1e-12


def test_dilute_single_vertex_marginal():
    P = DilutePottsParams(3, 0.5, 1.0, 2.0)
    spec = OracleSpec(Graph.from_edges(1, [], bc="free"), params=P, site=0)
    mu = invariant_measure(P)
    assert exact_dilute_potts(spec, "vacancy") == pytest.approx(mu[0] * 2 / (mu[0] * 2 + 3 * mu[1]), rel=1e-14)


def test_ising_fk_identity_and_large_lambda_limit():
    g = Graph.from_edges(3, [(0, 1), (1, 2)], bc="free")
    beta, _ = fk_limit_params(1.0, 2)
    lhs, rhs = potts_fk_two_point(g, 2, beta, 0, 2)
    assert abs(lhs - rhs) < 1e-14
    dilute = exact_dilute_potts(dp_path(3, 2, 1e6, 1.0), "tau_lhs")
    assert abs(dilute - lhs) < 1e-4


def test_dilute_spec_checks():
    with pytest.raises(ValueError):
        OracleSpec(build_box(1, 3), weight=Villain(1.0), params=DilutePottsParams())
    with pytest.raises(BudgetExceededError):
        OracleSpec(build_box(1, 9, bc="free"), params=DilutePottsParams())
    with pytest.raises(ValueError):
        exact_dilute_potts(dp_path(3, 2, 1.0, 1.0), "energy")


def test_trapezoid_rule_slow_for_bond_indicators():
    # the reason for the octant default: bond indicators jump at the axes
    spec = dataclasses.replace(path_spec(1, Villain(1.0)), rule="trapezoid")
    assert exact_o2_expectation(spec, "connect").error > 1e-6
    assert exact_o2_expectation(path_spec(1, Villain(1.0)), "connect").error < 1e-12
