"""Dilute Potts spins generated by a vacancy-mediated Markov chain.

States are ``0`` (vacancy) and ``1..Q``.  The chain jumps from 0 to each
spin state at rate ``lambda`` and from a spin state to 0 at rate 1.  Edge
weights are transition densities with respect to the invariant measure
``mu``; a configuration has weight

    u^{N_0} prod_{xy} p_t(s_x, s_y) prod_x mu(s_x).

A bond between equal non-zero spins is open when the chain bridge between
them never visits 0.  From a spin state the only jump is to 0, so this is
the event of no jump: probability ``e^{-t} / P_s(X_t = s)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .estimators import DEFAULT_BATCHES, InsufficientDataError, ratio_with_ci
from .graph import Graph, label_clusters


@dataclass(frozen=True)
class DilutePottsParams:
    Q: int = 2
    lam: float = 1.0
    t: float = 1.0
    u: float = 1.0

    def __post_init__(self):
        if int(self.Q) != self.Q or self.Q < 1:
            raise ValueError("Q must be a positive integer")
        for name in ("lam", "t", "u"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite")


def invariant_measure(params: DilutePottsParams) -> np.ndarray:
    """``mu`` over ``0..Q``: ``1/(1+Q lam)`` at 0 and ``lam/(1+Q lam)`` elsewhere."""
    Q, lam = params.Q, params.lam
    mu = np.full(Q + 1, lam / (1.0 + Q * lam))
    mu[0] = 1.0 / (1.0 + Q * lam)
    return mu


def rate_matrix(params: DilutePottsParams) -> np.ndarray:
    Q, lam = params.Q, params.lam
    G = np.zeros((Q + 1, Q + 1))
    G[0, 1:] = lam
    G[1:, 0] = 1.0
    G[np.diag_indices(Q + 1)] = -G.sum(axis=1)
    return G


def transition_prob(i: int, j: int, params: DilutePottsParams, t: float | None = None) -> float:
    """``P_i(X_t = j)`` in closed form."""
    Q, lam = params.Q, params.lam
    t = params.t if t is None else t
    if t < 0:
        raise ValueError("t must be non-negative")
    m = 1.0 + Q * lam
    E = math.exp(-m * t)
    one_minus_E = -math.expm1(-m * t)
    if i == 0 and j == 0:
        return (1.0 + Q * lam * E) / m
    if i == 0:
        return lam * one_minus_E / m
    if j == 0:
        return one_minus_E / m
    if i == j:
        return E / (Q * m) + (Q - 1) / Q * math.exp(-t) + lam / m
    return E / (Q * m) - math.exp(-t) / Q + lam / m


def transition_matrix(params: DilutePottsParams, t: float | None = None) -> np.ndarray:
    n = params.Q + 1
    return np.array([[transition_prob(i, j, params, t) for j in range(n)] for i in range(n)])


def transition_density(i: int, j: int, params: DilutePottsParams, t: float | None = None) -> float:
    """``p_t(i, j) = P_i(X_t = j) / mu(j)``, symmetric in ``(i, j)``."""
    return transition_prob(i, j, params, t) / invariant_measure(params)[j]


def density_matrix(params: DilutePottsParams, t: float | None = None) -> np.ndarray:
    return transition_matrix(params, t) / invariant_measure(params)[None, :]


def log_density_matrix(params: DilutePottsParams) -> np.ndarray:
    return np.log(density_matrix(params))


def dp_bond_open_prob(si: int, sj: int, params: DilutePottsParams) -> float:
    """Probability that the bridge from ``si`` to ``sj`` never visits 0."""
    if si != sj or si == 0:
        return 0.0
    return math.exp(-params.t) / transition_prob(si, si, params)


def fk_limit_params(t: float, Q: int):
    """``(beta, p)`` of the Potts/FK model reached as ``lam -> infinity``."""
    if not t > 0 or Q < 1:
        raise ValueError("need t > 0 and Q >= 1")
    e = math.exp(-t)
    beta = math.log((1.0 + (Q - 1) * e) / -math.expm1(-t))
    p = Q * e / (1.0 + (Q - 1) * e)
    return beta, p


# ----------------------------------------------------------------------
# configurations and weights
# ----------------------------------------------------------------------


@dataclass(eq=False)
class DPConfig:
    graph: Graph
    params: DilutePottsParams
    spins: np.ndarray
    pinned: np.ndarray = None
    _logd: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.spins = np.ascontiguousarray(np.asarray(self.spins, dtype=np.int64).copy())
        if self.spins.shape != (self.graph.n,):
            raise ValueError("need one spin per vertex")
        if self.spins.min() < 0 or self.spins.max() > self.params.Q:
            raise ValueError(f"spins must lie in 0..{self.params.Q}")
        if self.pinned is None:
            self.pinned = self.graph.boundary.copy()
        self.pinned = np.asarray(self.pinned, dtype=bool)
        self._logd = log_density_matrix(self.params)

    @classmethod
    def new(cls, graph, params, init=1, rng=None):
        """All spins ``init``, or uniform on ``0..Q`` when ``init="random"``."""
        if init == "random":
            spins = np.random.default_rng(rng).integers(0, params.Q + 1, graph.n)
        else:
            spins = np.full(graph.n, int(init))
        return cls(graph, params, spins)

    def copy(self):
        return DPConfig(self.graph, self.params, self.spins.copy(), self.pinned.copy())


def log_gibbs_weight(graph: Graph, spins, params: DilutePottsParams) -> float:
    """``log( u^{N_0} prod p_t(s_x, s_y) prod mu(s_x) )``."""
    spins = np.asarray(spins, dtype=np.int64)
    logd = log_density_matrix(params)
    mu = invariant_measure(params)
    e = graph.edges
    edge = logd[spins[e[:, 0]], spins[e[:, 1]]].sum()
    site = np.log(mu[spins]).sum() + math.log(params.u) * np.count_nonzero(spins == 0)
    return float(edge + site)


def gibbs_weight(cfg: DPConfig) -> float:
    """Unnormalized weight (may overflow for large graphs; use :func:`log_gibbs_weight`)."""
    return math.exp(log_gibbs_weight(cfg.graph, cfg.spins, cfg.params))


@dataclass(frozen=True)
class KVD:
    K: float
    V: float
    D: float
    A: float

    def log_weight(self, graph: Graph, spins) -> float:
        """``A + K sum delta(s_x=s_y!=0) + V sum 1[0 at an end] + D N_0``."""
        spins = np.asarray(spins)
        a, b = spins[graph.edges[:, 0]], spins[graph.edges[:, 1]]
        same = np.count_nonzero((a == b) & (a != 0))
        vac_edge = np.count_nonzero((a == 0) | (b == 0))
        return self.A + self.K * same + self.V * vac_edge + self.D * np.count_nonzero(spins == 0)


def kvd_parametrization(params: DilutePottsParams, degree: int, n_vertices: int, n_edges: int | None = None) -> KVD:
    """``(K, V, D, A)`` with ``log weight = A + K.. + V.. + D..`` on a ``degree``-regular graph.

    Edge weights with one or two vacancies differ by a per-vacancy amount;
    on a regular graph that amount sums to ``degree`` per vacancy, so it
    moves into ``D``.
    """
    if degree < 1:
        raise ValueError("degree must be positive")
    n_edges = degree * n_vertices // 2 if n_edges is None else n_edges
    if 2 * n_edges != degree * n_vertices:
        raise ValueError("graph is not regular with this degree")
    logd = log_density_matrix(params)
    mu = invariant_measure(params)
    Q = params.Q
    a_ss = logd[1, 1]
    a_sd = logd[1, 2] if Q >= 2 else 0.0
    a_s0, a_00 = logd[1, 0], logd[0, 0]
    a1, a2 = a_s0 - a_sd, a_00 - a_sd
    a3 = math.log(mu[0] * params.u / mu[1])
    return KVD(
        K=float(a_ss - a_sd),
        V=float(2 * a1 - a2),
        D=float(a3 - degree * (a1 - a2)),
        A=float(n_edges * a_sd + n_vertices * math.log(mu[1])),
    )


def kvd_for_graph(params: DilutePottsParams, graph: Graph) -> KVD:
    deg = graph.degree
    if not np.all(deg == deg[0]):
        raise ValueError("the (K, V, D) map needs a regular graph")
    return kvd_parametrization(params, int(deg[0]), graph.n, graph.n_edges)


# ----------------------------------------------------------------------
# sampling
# ----------------------------------------------------------------------


@njit(cache=True)
def _dp_sweep(spins, pinned, logd, logsite, nbr_ptr, nbr_idx, rng):
    q1 = logd.shape[0]
    lw = np.empty(q1)
    for v in range(spins.shape[0]):
        if pinned[v]:
            continue
        for s in range(q1):
            acc = logsite[s]
            for k in range(nbr_ptr[v], nbr_ptr[v + 1]):
                acc += logd[s, spins[nbr_idx[k]]]
            lw[s] = acc
        top = lw.max()
        total = 0.0
        for s in range(q1):
            lw[s] = math.exp(lw[s] - top)
            total += lw[s]
        target = rng.random() * total
        s = 0
        run = lw[0]
        while run <= target and s < q1 - 1:
            s += 1
            run += lw[s]
        spins[v] = s


@njit(cache=True)
def _dp_bonds(spins, edges, popen, rng, out):
    for e in range(edges.shape[0]):
        a = spins[edges[e, 0]]
        b = spins[edges[e, 1]]
        p = popen[a] if (a == b and a != 0) else 0.0
        out[e] = rng.random() < p


def _site_log_weights(params):
    mu = invariant_measure(params)
    out = np.log(mu)
    out[0] += math.log(params.u)
    return out


def _open_probs(params):
    return np.array([0.0] + [dp_bond_open_prob(s, s, params) for s in range(1, params.Q + 1)])


def dp_gibbs_sampler(cfg: DPConfig, rng, sweeps: int = 1) -> DPConfig:
    """Heat-bath sweeps in vertex order, one uniform per unpinned site."""
    g = cfg.graph
    logsite = _site_log_weights(cfg.params)
    for _ in range(sweeps):
        _dp_sweep(cfg.spins, cfg.pinned, cfg._logd, logsite, g.nbr_ptr, g.nbr_idx, rng)
    return cfg


def dp_sample_bonds(cfg: DPConfig, rng) -> np.ndarray:
    """Open bonds between equal non-zero spins; one uniform per edge."""
    out = np.zeros(cfg.graph.n_edges, dtype=np.bool_)
    _dp_bonds(cfg.spins, cfg.graph.edges, _open_probs(cfg.params), rng, out)
    return out


def dp_connected(cfg: DPConfig, bonds, x: int, y: int) -> bool:
    labels, _ = label_clusters(cfg.graph.n, cfg.graph.edges, np.asarray(bonds, dtype=np.bool_), cfg.pinned)
    return bool(labels[x] == labels[y])


def dp_run(cfg: DPConfig, x: int, y: int, n_measurements: int, rng, burn_in: int = 100, sweeps_between: int = 1):
    """Sample ``(s_x, s_y, 1[x <-> y])`` after each block of sweeps."""
    rng = np.random.default_rng(rng)
    dp_gibbs_sampler(cfg, rng, burn_in)
    out = np.zeros((n_measurements, 3), dtype=np.int64)
    for i in range(n_measurements):
        dp_gibbs_sampler(cfg, rng, sweeps_between)
        bonds = dp_sample_bonds(cfg, rng)
        out[i] = cfg.spins[x], cfg.spins[y], dp_connected(cfg, bonds, x, y)
    return out


@dataclass(frozen=True)
class TauEstimate:
    tau: float
    tau_err: float
    rhs: float
    rhs_err: float
    diff: float
    diff_err: float
    n_valid: int


def tau_estimator(samples, Q: int, n_batches: int = DEFAULT_BATCHES) -> TauEstimate:
    """Both sides of ``E[delta | s_x s_y != 0] - 1/Q = (1 - 1/Q) P(x <-> y | s_x s_y != 0)``.

    ``samples`` is an ``(n, 3)`` array of ``(s_x, s_y, connected)`` rows.
    The difference is estimated directly, as one ratio with the shared
    denominator, so its error accounts for the correlation of both sides.
    """
    samples = np.asarray(samples)
    sx, sy, conn = samples[:, 0], samples[:, 1], samples[:, 2].astype(float)
    valid = ((sx != 0) & (sy != 0)).astype(float)
    if valid.sum() < 2 * n_batches:
        raise InsufficientDataError("too few samples with both spins non-vacant")
    same = (sx == sy).astype(float) * valid
    lhs = ratio_with_ci(same - valid / Q, valid, n_batches)
    rhs = ratio_with_ci((1 - 1 / Q) * conn * valid, valid, n_batches)
    diff = ratio_with_ci(same - valid / Q - (1 - 1 / Q) * conn * valid, valid, n_batches)
    return TauEstimate(lhs.ratio, lhs.ratio_err, rhs.ratio, rhs.ratio_err, diff.ratio, diff.ratio_err, int(valid.sum()))
