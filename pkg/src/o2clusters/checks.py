"""Deterministic identity suites with residuals and tolerances.

Each suite returns a list of :class:`Check`; a suite passes when every
residual is at most its tolerance.  Sample counts are arguments so the
same code serves quick CLI runs and the larger acceptance runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .bonds import _partition, pair_swap_case_identities, pair_bond_law, radon_nikodym_single, sample_bonds, single_bond_prob
from .graph import Graph, build_box
from .kernels import (
    R,
    TWO_PI,
    ReflectionAxis,
    Villain,
    XYExp,
    reflected_kernel_half,
    reflected_kernel_quarter,
    wrapped_heat_kernel,
    wrapped_heat_kernel_dual,
)
from .potts import (
    DilutePottsParams,
    dp_bond_open_prob,
    fk_limit_params,
    invariant_measure,
    rate_matrix,
    transition_matrix,
)
from .spins import SpinConfig

SUITES = ("kernels", "bonds", "lemmas", "dilute")


@dataclass(frozen=True)
class Check:
    name: str
    residual: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tol)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<48s} residual={self.residual:.3e}  tol={self.tol:.0e}"


def _trapezoid(M):
    return np.arange(M) * (TWO_PI / M), TWO_PI / M


# ----------------------------------------------------------------------
# kernels
# ----------------------------------------------------------------------


def kernel_checks(rng=0, n_points=200) -> list[Check]:
    """Normalization, Chapman-Kolmogorov, dual series and reflected-kernel forms."""
    rng = np.random.default_rng(rng)
    out = []
    nodes, h = _trapezoid(1024)
    norm = 0.0
    for t in (0.05, 0.3, 1.0, 2 * math.pi, 20.0):
        for a in rng.uniform(0, TWO_PI, 5):
            norm = max(norm, abs(wrapped_heat_kernel(a, nodes, t).sum() * h - 1.0))
    out.append(Check("heat kernel normalization", norm, 1e-9))

    ck = 0.0
    for s, t in ((0.1, 0.2), (0.5, 1.0), (1.0, 3.0), (4.0, 9.0)):
        for a, b in rng.uniform(0, TWO_PI, (5, 2)):
            lhs = (wrapped_heat_kernel(a, nodes, s) * wrapped_heat_kernel(nodes, b, t)).sum() * h
            ck = max(ck, abs(lhs - wrapped_heat_kernel(a, b, s + t)))
    out.append(Check("Chapman-Kolmogorov", ck, 1e-9))

    t = rng.uniform(1.0, 20.0, n_points)
    a, b = rng.uniform(0, TWO_PI, (2, n_points))
    gauss = wrapped_heat_kernel(a, b, t, side="gaussian", precise=True)
    out.append(Check("dual series agreement, t in [1, 20]",
                     float(np.max(np.abs(gauss - wrapped_heat_kernel_dual(a, b, t)))), 1e-12))

    half = quarter = 0.0
    for t in (0.1, 0.5, 1.0, 3.0, 10.0):
        a, b = rng.uniform(-math.pi / 2, math.pi / 2, (2, n_points))
        half = max(half, float(np.max(np.abs(
            reflected_kernel_half(a, b, t, form="images") - reflected_kernel_half(a, b, t, form="difference")))))
        a, b = rng.uniform(-math.pi / 4, math.pi / 4, (2, n_points))
        quarter = max(quarter, float(np.max(np.abs(
            reflected_kernel_quarter(a, b, t, form="images") - reflected_kernel_quarter(a, b, t, form="reflections")))))
    out.append(Check("half-circle kernel, images vs difference", half, 1e-12))
    out.append(Check("quarter-circle kernel, images vs reflections", quarter, 1e-12))
    return out


# ----------------------------------------------------------------------
# bonds
# ----------------------------------------------------------------------

BOND_WEIGHTS = (Villain(0.5), Villain(1.0), Villain(5.0), XYExp(0.5), XYExp(2.0))


def _perturbed(eps):
    def bond_prob(w, ux, uy, axis):
        p = single_bond_prob(w, ux, uy, axis)
        return np.clip(p + eps * (p > 0), 0.0, 1.0 - 1e-9)

    return bond_prob


def rn_residual(w, n_triples=1000, rng=0, perturb=0.0, graph: Graph | None = None) -> float:
    """Largest ``|RN - 1|`` over random (configuration, bonds, site) triples.

    Only triples whose site cluster misses the boundary and has at least
    one cut edge are counted; others give 1 trivially.
    """
    rng = np.random.default_rng(rng)
    g = graph or build_box(2, 5, bc="wired")
    axis = ReflectionAxis(math.pi / 2)
    bond_prob = _perturbed(perturb) if perturb else None
    worst, found = 0.0, 0
    free = np.flatnonzero(~g.boundary)
    while found < n_triples:
        cfg = SpinConfig.new(g, w, init="random", rng=rng)
        bonds = sample_bonds(cfg, axis, rng)
        z = int(rng.choice(free))
        labels, touches = _partition(cfg, bonds)
        inside = labels == labels[z]
        if touches[z] or not np.any(inside[g.edges[:, 0]] != inside[g.edges[:, 1]]):
            continue
        found += 1
        worst = max(worst, abs(radon_nikodym_single(cfg, bonds, z, axis, bond_prob=bond_prob) - 1.0))
    return worst


def feasibility_residual(w, n_pairs=10**5, rng=0) -> float:
    """Largest violation of ``max(0, p+q-1) <= c <= min(p, q)`` and ``c >= 0``."""
    rng = np.random.default_rng(rng)
    ux, uy = rng.uniform(0, TWO_PI, (2, n_pairs))
    law = pair_bond_law(w, ux, uy, check=False)
    viol = np.maximum.reduce([
        np.maximum(0, law.p + law.q - 1) - law.c,
        law.c - np.minimum(law.p, law.q),
        -law.c,
        np.zeros(n_pairs),
    ])
    return float(viol.max())


def bond_checks(rng=0, n_triples=200, n_pairs=10**4, perturb=0.0) -> list[Check]:
    out = []
    for w in BOND_WEIGHTS:
        out.append(Check(f"RN = 1, {w!r}", rn_residual(w, n_triples, rng, perturb), 1e-12))
    for w in BOND_WEIGHTS:
        out.append(Check(f"pair-law feasibility, {w!r}", feasibility_residual(w, n_pairs, rng), 1e-12))
    return out


# ----------------------------------------------------------------------
# pair-swap identities
# ----------------------------------------------------------------------


def lemma_residuals(w, n_per_case=10**4, rng=0) -> dict:
    """``{(name, (kx, ky)): max residual}`` with at least ``n_per_case`` inputs per quadrant pair."""
    rng = np.random.default_rng(rng)
    best = {}
    for kx in range(4):
        for ky in range(4):
            ux = rng.uniform(-math.pi / 4, math.pi / 4, n_per_case) + kx * math.pi / 2
            uy = rng.uniform(-math.pi / 4, math.pi / 4, n_per_case) + ky * math.pi / 2
            for name, case, res in pair_swap_case_identities(w, np.mod(ux, TWO_PI), np.mod(uy, TWO_PI)):
                key = (name, case)
                best[key] = max(best.get(key, 0.0), float(np.max(res)))
    return best


def lemma_checks(rng=0, n_per_case=1000) -> list[Check]:
    out = []
    for w in BOND_WEIGHTS:
        res = lemma_residuals(w, n_per_case, rng)
        out.append(Check(f"pair-swap identities ({len(res)} cases), {w!r}", max(res.values()), 1e-12))
    return out


# ----------------------------------------------------------------------
# dilute Potts
# ----------------------------------------------------------------------

DILUTE_GRID = [(Q, lam, t) for Q in (1, 2, 3, 5) for lam in (0.1, 1.0, 7.0) for t in (0.05, 0.7, 3.0)]
TAU_CASES = ((2, 1.0, 1.0, 1.0), (3, 0.4, 0.7, 2.0), (2, 5.0, 0.3, 0.5), (4, 2.0, 1.5, 1.0))


def dilute_checks() -> list[Check]:
    from .oracle import OracleSpec, exact_dilute_potts

    rows = balance = mexp = 0.0
    for Q, lam, t in DILUTE_GRID:
        P = DilutePottsParams(Q, lam, t)
        T = transition_matrix(P)
        mu = invariant_measure(P)
        rows = max(rows, float(np.max(np.abs(T.sum(axis=1) - 1))))
        flow = mu[:, None] * T
        balance = max(balance, float(np.max(np.abs(flow - flow.T))))
        mexp = max(mexp, float(np.max(np.abs(T - expm(t * rate_matrix(P))))))
    out = [
        Check("transition rows sum to 1", rows, 1e-14),
        Check("detailed balance", balance, 1e-14),
        Check("closed form vs matrix exponential", mexp, 1e-12),
    ]
    tau = 0.0
    for Q, lam, t, u in TAU_CASES:
        for n in (2, 3):
            g = Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)], bc="free")
            spec = OracleSpec(g, params=DilutePottsParams(Q, lam, t, u), site=0, other=n - 1)
            tau = max(tau, abs(exact_dilute_potts(spec, "tau_lhs") - exact_dilute_potts(spec, "tau_rhs")))
    out.append(Check("connectivity identity on paths", tau, 1e-12))
    lim = 0.0
    for Q in (2, 3):
        for t in (0.3, 1.0, 2.0):
            beta, _ = fk_limit_params(t, Q)
            lim = max(lim, abs(dp_bond_open_prob(1, 1, DilutePottsParams(Q, 1e6, t)) + math.expm1(-beta)))
    out.append(Check("lambda = 1e6 bond probability vs 1 - e^-beta", lim, 1e-4))
    return out


def run_suite(name: str, perturb: float = 0.0, **kw) -> list[Check]:
    if name == "kernels":
        return kernel_checks(**kw)
    if name == "bonds":
        return bond_checks(perturb=perturb, **kw)
    if name == "lemmas":
        return lemma_checks(**kw)
    if name == "dilute":
        return dilute_checks()
    raise ValueError(f"unknown suite {name!r}; expected one of {SUITES + ('all',)}")
