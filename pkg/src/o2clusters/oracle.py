"""Exact expectations on tiny instances: angle quadrature times bond enumeration.

For the O(2) models every unpinned angle runs over a quadrature grid and,
for bond observables, every bond pattern is summed with its conditional
probability, so the only error is quadrature error.  Bond indicators jump
where a spin crosses a reflection axis, and all axes used here sit at
multiples of ``pi/4``; the default rule is therefore Gauss-Legendre on the
eight octant panels, which is smooth panel by panel.  The periodic
trapezoid rule is available for smooth observables.

The error estimate is ``|E_M - E_{2M}|``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import i0e, i1e

from .bonds import pair_bond_law, single_bond_prob
from .graph import Graph, components
from .kernels import R, TWO_PI, Villain, WeightFunction, XYExp
from .potts import DilutePottsParams, dp_bond_open_prob, fk_limit_params, log_gibbs_weight

BUDGET = 2**30
CHUNK = 2**18


class BudgetExceededError(ValueError):
    """The instance is too large for exact evaluation."""


@dataclass(frozen=True, eq=False)
class OracleSpec:
    """A tiny O(2) or dilute Potts instance.

    ``weight`` is a :class:`WeightFunction` for O(2) models and
    ``params`` a :class:`DilutePottsParams` for dilute Potts.  Pinned
    vertices (the graph boundary) sit at ``boundary_angle``.
    """

    graph: Graph
    weight: WeightFunction | None = None
    params: DilutePottsParams | None = None
    M: int = 64
    site: int = 1
    other: int | None = None
    boundary_angle: float = 0.0
    rule: str = "octant"
    budget: int = BUDGET

    def __post_init__(self):
        if (self.weight is None) == (self.params is None):
            raise ValueError("give exactly one of weight and params")
        if self.M < 8 or self.M & (self.M - 1):
            raise ValueError("M must be a power of two, at least 8")
        if self.rule not in ("octant", "trapezoid"):
            raise ValueError("rule must be 'octant' or 'trapezoid'")
        n_free = int((~self.graph.boundary).sum())
        if self.weight is not None and n_free > 6:
            raise BudgetExceededError("O(2) oracle handles at most 6 unpinned vertices")
        if self.params is not None and self.graph.n > 8:
            raise BudgetExceededError("dilute Potts oracle handles at most 8 vertices")


@dataclass(frozen=True)
class OracleValue:
    value: float
    error: float

    def to_dict(self):
        return {"value": self.value, "error": self.error}


def quadrature(M: int, rule: str = "octant"):
    """Nodes and weights on ``[0, 2 pi)`` with ``M`` nodes."""
    if rule == "trapezoid":
        return np.arange(M) * (TWO_PI / M), np.full(M, TWO_PI / M)
    k = M // 8
    x, w = np.polynomial.legendre.leggauss(k)
    half = math.pi / 8
    nodes = np.concatenate([a + half * (x + 1) for a in np.arange(8) * (math.pi / 4)])
    weights = np.tile(w * half, 8)
    return nodes, weights


def _edge_weights(spec: OracleSpec):
    w, g = spec.weight, spec.graph
    if isinstance(w, Villain):
        ts = g.t if w.t is None else np.full(g.n_edges, w.t)
        return [Villain(t=float(t), precise=True) for t in ts]
    return [w] * g.n_edges


# ----------------------------------------------------------------------
# O(2)
# ----------------------------------------------------------------------

O2_OBSERVABLES = (
    "one",
    "cos1",
    "cos2",
    "connect",
    "connect_both",
    "cos1_disconnected",
    "cos2_not_both",
    "two_point_cos",
    "two_point_connect",
)


def _o2_sums(spec: OracleSpec, M: int, observables):
    """Unnormalized sums ``sum weight * observable`` on an ``M``-node grid."""
    g = spec.graph
    free = np.flatnonzero(~g.boundary)
    nodes, qw = quadrature(M, spec.rule)
    need_single = any(o in ("connect", "cos1_disconnected") for o in observables)
    need_pair = any(o in ("connect_both", "cos2_not_both") for o in observables)
    need_two = "two_point_connect" in observables
    # edges between two pinned vertices carry a constant factor and no information
    live = np.flatnonzero(~(g.boundary[g.edges[:, 0]] & g.boundary[g.edges[:, 1]]))
    states = M ** len(free)
    work = states * max(1, 2 ** len(live) * (need_single + need_two) + 4 ** len(live) * need_pair)
    if work > spec.budget:
        raise BudgetExceededError(f"oracle work {work} exceeds budget {spec.budget}")
    ws = _edge_weights(spec)
    log0 = np.array([float(ws[e].log_weight(0.0)) for e in range(g.n_edges)])
    x, y = spec.site, spec.other

    def conn_table(families):
        """Connectivity indicators per bond pattern over the live edges."""
        tab = []
        for bits in itertools.product((0, 1), repeat=len(live) * families):
            ok = []
            for f in range(families):
                full = np.zeros(g.n_edges, dtype=bool)
                full[live] = bits[f * len(live) : (f + 1) * len(live)]
                part = components(g, full)
                ok.append(part.touches_boundary(x) if y is None or families == 2 else part.connected(x, y))
            tab.append(all(ok))
        return np.array(tab, dtype=float)

    single_tab = conn_table(1) if need_single else None
    two_tab = None
    if need_two:
        if y is None:
            raise ValueError("two-point observables need spec.other")
        two_tab = np.array([
            components(g, _full(g, live, bits)).connected(x, y)
            for bits in itertools.product((0, 1), repeat=len(live))
        ], dtype=float)
    pair_tab = conn_table(2) if need_pair else None

    totals = dict.fromkeys(observables, 0.0)
    for start in range(0, states, CHUNK):
        idx = np.unravel_index(np.arange(start, min(states, start + CHUNK)), (M,) * len(free))
        theta = np.full((g.n, len(idx[0])), float(spec.boundary_angle))
        qwt = np.ones(len(idx[0]))
        for k, v in enumerate(free):
            theta[v] = nodes[idx[k]]
            qwt = qwt * qw[idx[k]]
        a, b = theta[g.edges[:, 0]], theta[g.edges[:, 1]]
        logw = np.zeros(len(qwt))
        for e in range(g.n_edges):
            logw += ws[e].log_weight(a[e] - b[e]) - log0[e]
        wt = qwt * np.exp(logw)
        ref = theta - spec.boundary_angle
        vals = {"one": np.ones(len(wt))}
        vals["cos1"] = np.cos(ref[x])
        vals["cos2"] = np.cos(2 * ref[x])
        if need_single:
            probs = np.array([single_bond_prob(ws[e], ref[g.edges[e, 0]], ref[g.edges[e, 1]], R) for e in live])
            vals["connect"] = _pattern_sum(probs, single_tab)
            vals["cos1_disconnected"] = vals["cos1"] * (1 - vals["connect"])
        if need_pair:
            laws = [pair_bond_law(ws[e], ref[g.edges[e, 0]], ref[g.edges[e, 1]]) for e in live]
            vals["connect_both"] = _pair_pattern_sum(laws, pair_tab)
            vals["cos2_not_both"] = vals["cos2"] * (1 - vals["connect_both"])
        if y is not None:
            vals["two_point_cos"] = np.cos(theta[x] - theta[y])
        if need_two:
            probs = np.array([
                single_bond_prob(ws[e], theta[g.edges[e, 0]], theta[g.edges[e, 1]], _PerSampleAxis(theta[y]))
                for e in live
            ])
            vals["two_point_connect"] = _pattern_sum(probs, two_tab)
        for o in observables:
            totals[o] += float(np.dot(wt, vals[o]))
    return totals


class _PerSampleAxis:
    """Reflection axis through ``+-i e^{i theta_y}``, one per grid point."""

    def __init__(self, theta_y):
        self.nu = np.asarray(theta_y) + math.pi / 2

    def reflect(self, u):
        return np.mod(2.0 * self.nu - np.asarray(u), TWO_PI)


def _full(g, live, bits):
    full = np.zeros(g.n_edges, dtype=bool)
    full[live] = bits
    return full


def _pattern_sum(probs, table):
    """``sum_patterns table[pattern] * prod_e P(e | theta)`` over independent edges."""
    out = np.zeros(probs.shape[1])
    for k, bits in enumerate(itertools.product((0, 1), repeat=probs.shape[0])):
        if table[k] == 0:
            continue
        term = np.ones(probs.shape[1])
        for e, bit in enumerate(bits):
            term = term * (probs[e] if bit else 1.0 - probs[e])
        out += term
    return out


def _pair_pattern_sum(laws, table):
    """Same as :func:`_pattern_sum` for pair bonds; patterns list family 1 then family 2."""
    n_live = len(laws)
    cell = {}
    for e, law in enumerate(laws):
        cell[e] = {(1, 1): law.c, (1, 0): law.b1, (0, 1): law.b2, (0, 0): law.b0}
    out = 0.0
    for k, bits in enumerate(itertools.product((0, 1), repeat=2 * n_live)):
        if table[k] == 0:
            continue
        term = 1.0
        for e in range(n_live):
            term = term * cell[e][(bits[e], bits[n_live + e])]
        out = out + term
    return out


def exact_o2_expectation(spec: OracleSpec, observable: str) -> OracleValue:
    """``E[observable]`` with the grid-doubling error ``|E_M - E_2M|``."""
    if observable not in O2_OBSERVABLES:
        raise ValueError(f"unknown observable {observable!r}; expected one of {O2_OBSERVABLES}")
    if spec.weight is None:
        raise ValueError("spec has no O(2) weight")
    vals = []
    for M in (spec.M, 2 * spec.M):
        s = _o2_sums(spec, M, ("one", observable))
        vals.append(s[observable] / s["one"])
    return OracleValue(vals[1], abs(vals[1] - vals[0]))


def exact_o2_many(spec: OracleSpec, observables=O2_OBSERVABLES[1:7]) -> dict:
    """Several expectations from one pass per grid."""
    res = [_o2_sums(spec, M, ("one",) + tuple(observables)) for M in (spec.M, 2 * spec.M)]
    return {o: OracleValue(res[1][o] / res[1]["one"], abs(res[1][o] / res[1]["one"] - res[0][o] / res[0]["one"]))
            for o in observables}


def xy_single_neighbor_cos(beta: float) -> float:
    """``<cos theta>`` for one spin tied to a pinned spin at angle 0: ``I1(beta)/I0(beta)``."""
    return float(i1e(beta) / i0e(beta))


# ----------------------------------------------------------------------
# dilute Potts
# ----------------------------------------------------------------------

DP_OBSERVABLES = ("tau_lhs", "tau_rhs", "same", "vacancy", "valid", "connect")


def exact_dilute_potts(spec: OracleSpec, observable: str, bond_prob=dp_bond_open_prob) -> float:
    """Exact expectations by enumeration of spins and bonds.

    ``tau_lhs`` and ``tau_rhs`` are the two sides of the connectivity
    identity for ``(site, other)``; ``same`` and ``connect`` are
    conditioned on both spins being non-vacant; ``vacancy`` is
    ``P(s_site = 0)`` and ``valid`` is ``P(s_site s_other != 0)``.
    ``bond_prob(s_i, s_j, params)`` overrides the bond law.
    """
    if observable not in DP_OBSERVABLES:
        raise ValueError(f"unknown observable {observable!r}; expected one of {DP_OBSERVABLES}")
    g, P = spec.graph, spec.params
    if P is None:
        raise ValueError("spec has no dilute Potts parameters")
    x, y = spec.site, spec.other if spec.other is not None else spec.site
    n_states = (P.Q + 1) ** g.n
    if n_states * 2**g.n_edges > spec.budget:
        raise BudgetExceededError("dilute Potts enumeration exceeds budget")
    patterns = list(itertools.product((0, 1), repeat=g.n_edges))
    conn_of = np.array([components(g, np.array(b, dtype=bool)).connected(x, y) for b in patterns], dtype=float)
    logs, rows = [], []
    for s in itertools.product(range(P.Q + 1), repeat=g.n):
        logs.append(log_gibbs_weight(g, s, P))
        rows.append(s)
    logs = np.array(logs)
    w = np.exp(logs - logs.max())
    rows = np.array(rows)
    valid = (rows[:, x] != 0) & (rows[:, y] != 0)
    if observable == "vacancy":
        return float(w[rows[:, x] == 0].sum() / w.sum())
    if observable == "valid":
        return float(w[valid].sum() / w.sum())
    if not valid.any():
        raise ValueError("no configuration has both spins non-vacant")
    same = float(w[valid & (rows[:, x] == rows[:, y])].sum() / w[valid].sum())
    if observable == "same":
        return same
    if observable == "tau_lhs":
        return same - 1.0 / P.Q
    conn = 0.0
    for wi, s in zip(w[valid], rows[valid]):
        probs = np.array([bond_prob(int(s[a]), int(s[b]), P) for a, b in g.edges])
        pr = np.prod(np.where(np.array(patterns, dtype=bool), probs, 1.0 - probs), axis=1)
        conn += wi * float(np.dot(pr, conn_of))
    conn /= w[valid].sum()
    return conn if observable == "connect" else (1.0 - 1.0 / P.Q) * conn


def potts_fk_two_point(graph: Graph, Q: int, beta: float, x: int, y: int):
    """``(E[delta] - 1/Q, (1 - 1/Q) P_FK(x <-> y))`` for the plain Potts model."""
    weights, same = [], []
    for s in itertools.product(range(Q), repeat=graph.n):
        s = np.array(s)
        agree = np.count_nonzero(s[graph.edges[:, 0]] == s[graph.edges[:, 1]])
        weights.append(math.exp(beta * agree))
        same.append(s[x] == s[y])
    weights = np.array(weights)
    lhs = float(weights[np.array(same)].sum() / weights.sum()) - 1.0 / Q
    p = -math.expm1(-beta)
    num = den = 0.0
    for bits in itertools.product((0, 1), repeat=graph.n_edges):
        bits = np.array(bits, dtype=bool)
        part = components(graph, bits)
        n_clusters = len(np.unique(part.labels))
        k = int(bits.sum())
        wgt = p**k * (1 - p) ** (graph.n_edges - k) * Q**n_clusters
        den += wgt
        num += wgt * part.connected(x, y)
    return lhs, (1.0 - 1.0 / Q) * num / den


# ----------------------------------------------------------------------
# manifest
# ----------------------------------------------------------------------


def _two_vertex(t_or_beta, model="villain"):
    g = Graph.from_edges(2, [(0, 1)], boundary=[0])
    w = Villain(t=t_or_beta) if model == "villain" else XYExp(beta=t_or_beta)
    return OracleSpec(g, weight=w, site=1)


def _path3(t_or_beta, model="villain", site=2):
    g = Graph.from_edges(3, [(0, 1), (1, 2)], boundary=[0])
    w = Villain(t=t_or_beta) if model == "villain" else XYExp(beta=t_or_beta)
    return OracleSpec(g, weight=w, site=site)


def _dp_path(Q, lam, t, u=1.0):
    g = Graph.from_edges(3, [(0, 1), (1, 2)], bc="free")
    return OracleSpec(g, params=DilutePottsParams(Q, lam, t, u), site=0, other=2)


@dataclass
class Manifest:
    """Case id -> ``{"value", "error"}`` plus a description of each case."""

    cases: dict = field(default_factory=dict)

    def add(self, case_id, value: OracleValue, description=""):
        self.cases[case_id] = {**value.to_dict(), "description": description}

    def to_json(self):
        return json.dumps({"cases": self.cases}, indent=2, sort_keys=True) + "\n"

    def save(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path):
        return cls(json.loads(Path(path).read_text())["cases"])


def build_manifest() -> Manifest:
    """All shipped oracle cases."""
    man = Manifest()
    single = OracleSpec(Graph.from_edges(1, [], bc="free"), weight=Villain(1.0), site=0)
    man.add("free_vertex/cos1", exact_o2_expectation(single, "cos1"), "isolated unpinned vertex")
    man.add("xy_b1/two_vertex/cos1", exact_o2_expectation(_two_vertex(1.0, "xy"), "cos1"),
            "XY beta=1, one spin tied to a pinned spin")
    for t in (0.7, 1.0, 1.5):
        for name, spec in (("two_vertex", _two_vertex(t)), ("path3", _path3(t))):
            for obs, val in exact_o2_many(spec).items():
                man.add(f"villain_t{t}/{name}/{obs}", val, f"Villain t={t}, {name}, site {spec.site}")
    for beta in (0.5, 2.0):
        for obs, val in exact_o2_many(_path3(beta, "xy")).items():
            man.add(f"xy_b{beta}/path3/{obs}", val, f"XY beta={beta}, path3, site 2")
    for Q, lam, t, u in ((2, 1.0, 1.0, 1.0), (3, 0.4, 0.7, 2.0)):
        spec = _dp_path(Q, lam, t, u)
        for obs in ("tau_lhs", "tau_rhs", "valid"):
            man.add(f"dilute_Q{Q}_l{lam}_t{t}_u{u}/path3/{obs}", OracleValue(exact_dilute_potts(spec, obs), 0.0),
                    "dilute Potts on a free 3-vertex path, sites 0 and 2")
    beta, _ = fk_limit_params(1.0, 2)
    lhs, rhs = potts_fk_two_point(Graph.from_edges(3, [(0, 1), (1, 2)], bc="free"), 2, beta, 0, 2)
    man.add("potts_Q2_t1/path3/tau_lhs", OracleValue(lhs, 0.0), "plain Potts at the limiting beta")
    man.add("potts_Q2_t1/path3/tau_rhs", OracleValue(rhs, 0.0), "FK side of the same identity")
    return man


CASE_SPECS = {
    "two_vertex": _two_vertex,
    "path3": _path3,
}
