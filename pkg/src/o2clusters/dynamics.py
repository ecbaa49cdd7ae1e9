"""Cluster-swapping and Wolff dynamics, single-site baselines, and chain runs.

One cluster-swapping step:

1. draw ``nu`` uniform on ``[0, 2 pi)``;
2. open each edge independently with the single-bond law for the axis
   through ``+-e^{i(nu + pi/2)}``; both spins must lie strictly on one
   side of that axis, i.e. ``cos(theta - nu)`` of equal sign;
3. every cluster missing the boundary is reflected, ``theta -> 2 nu + pi - theta``,
   with probability 1/2, one uniform per such cluster in ascending label order.

Random numbers per step: one for ``nu``, one per edge, one per free
cluster.  A Wolff step uses one for the seed, one for ``nu`` and one per
tested edge.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .bonds import _bond_open_prob, _sample_pair_bonds, _sample_single_bonds
from .estimators import STANDARD, ObservableSeries
from .graph import label_clusters
from .kernels import TWO_PI, XYExp
from .spins import (
    GRID,
    SpinConfig,
    _heat_bath_table_sweep,
    _heat_bath_xy_sweep,
    _metropolis_sweep,
    _wrap1,
)

SCHEMES = ("cluster_swapping", "wolff", "metropolis_baseline", "heat_bath_baseline")
INTERLEAVE = ("heat_bath", "metropolis", "none")
_SWEEP_NONE, _SWEEP_HB, _SWEEP_METRO = 0, 1, 2


@dataclass(frozen=True)
class DynamicsConfig:
    """How a chain moves between measurements.

    ``interleave`` is the single-site sweep run after every cluster step
    (ignored by the two baselines).
    """

    scheme: str = "cluster_swapping"
    sweeps_between_measurements: int = 1
    burn_in: int = 1000
    interleave: str = "heat_bath"
    proposal_width: float = math.pi / 2

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.interleave not in INTERLEAVE:
            raise ValueError(f"unknown interleave {self.interleave!r}; expected one of {INTERLEAVE}")
        if self.sweeps_between_measurements < 1 or self.burn_in < 0:
            raise ValueError("sweeps_between_measurements must be >= 1 and burn_in >= 0")
        if not self.proposal_width > 0:
            raise ValueError("proposal_width must be positive")

    @property
    def codes(self):
        scheme = SCHEMES.index(self.scheme)
        if scheme == 2:
            return scheme, _SWEEP_METRO
        if scheme == 3:
            return scheme, _SWEEP_HB
        return scheme, {"none": _SWEEP_NONE, "heat_bath": _SWEEP_HB, "metropolis": _SWEEP_METRO}[self.interleave]


# ----------------------------------------------------------------------
# compiled steps
# ----------------------------------------------------------------------


@njit(cache=True)
def _cluster_swap(logw, theta, pinned, edges, eparam, rng, bonds):
    n = theta.shape[0]
    nu = TWO_PI * rng.random()
    _sample_single_bonds(logw, theta, edges, eparam, nu + 0.5 * math.pi, rng, bonds)
    labels, touches = label_clusters(n, edges, bonds, pinned)
    flip = np.zeros(n, dtype=np.bool_)
    for v in range(n):
        if labels[v] == v and not touches[v]:
            flip[v] = rng.random() < 0.5
    for v in range(n):
        if flip[labels[v]]:
            theta[v] = _wrap1(2.0 * nu + math.pi - theta[v])
    return nu


@njit(cache=True)
def _wolff(logw, theta, pinned, nbr_ptr, nbr_idx, nbr_edge, eparam, free_idx, rng):
    """Grow one cluster and reflect it; returns its size, 0 when it meets the boundary."""
    if free_idx.shape[0] == 0:
        return 0
    seed = free_idx[min(int(rng.random() * free_idx.shape[0]), free_idx.shape[0] - 1)]
    nu = TWO_PI * rng.random()
    n = theta.shape[0]
    in_cluster = np.zeros(n, dtype=np.bool_)
    members = np.empty(n, dtype=np.int64)
    in_cluster[seed] = True
    members[0] = seed
    size = 1
    head = 0
    while head < size:
        x = members[head]
        head += 1
        for k in range(nbr_ptr[x], nbr_ptr[x + 1]):
            y = nbr_idx[k]
            if in_cluster[y]:
                continue
            p = _bond_open_prob(logw, theta[x], theta[y], eparam[nbr_edge[k]], nu)
            if rng.random() < p:
                if pinned[y]:
                    return 0
                in_cluster[y] = True
                members[size] = y
                size += 1
    for i in range(size):
        v = members[i]
        theta[v] = _wrap1(2.0 * nu - theta[v])
    return size


@njit(cache=True)
def _advance(n_steps, scheme, sweep_kind, logw, theta, pinned, edges, eparam, nbr_ptr, nbr_idx, nbr_edge,
             tables, tab_of_edge, hb_xy, width, free_idx, rng, bonds):
    for _ in range(n_steps):
        if scheme == 0:
            _cluster_swap(logw, theta, pinned, edges, eparam, rng, bonds)
        elif scheme == 1:
            _wolff(logw, theta, pinned, nbr_ptr, nbr_idx, nbr_edge, eparam, free_idx, rng)
        if sweep_kind == _SWEEP_METRO:
            _metropolis_sweep(logw, theta, pinned, width, nbr_ptr, nbr_idx, nbr_edge, eparam, rng)
        elif sweep_kind == _SWEEP_HB:
            if hb_xy:
                _heat_bath_xy_sweep(theta, pinned, nbr_ptr, nbr_idx, nbr_edge, eparam, rng)
            else:
                _heat_bath_table_sweep(theta, pinned, tables, tab_of_edge, nbr_ptr, nbr_idx, nbr_edge, GRID, rng)


@njit(cache=True)
def _measure(logw, theta, pinned, edges, eparam, site, reference, need_bonds, rng, bonds, e1, e2, out):
    """Standard observables into ``out`` (order of ``STANDARD``); returns -1 or an infeasible edge."""
    n = theta.shape[0]
    rot = np.empty(n)
    for v in range(n):
        rot[v] = _wrap1(theta[v] - reference)
    c1 = math.cos(rot[site])
    c2 = math.cos(2.0 * rot[site])
    conn = 0.0
    both = 0.0
    bad = -1
    if need_bonds:
        _sample_single_bonds(logw, rot, edges, eparam, 0.5 * math.pi, rng, bonds)
        _, touches = label_clusters(n, edges, bonds, pinned)
        conn = 1.0 if touches[site] else 0.0
        bad = _sample_pair_bonds(logw, rot, edges, eparam, rng, e1, e2)
        _, t1 = label_clusters(n, edges, e1, pinned)
        _, t2 = label_clusters(n, edges, e2, pinned)
        both = 1.0 if (t1[site] and t2[site]) else 0.0
    out[0] = c1
    out[1] = c2
    out[2] = conn
    out[3] = both
    out[4] = c1 * (1.0 - conn)
    out[5] = c2 * (1.0 - both)
    return bad


@njit(cache=True)
def _run_standard(n_meas, between, scheme, sweep_kind, logw, theta, pinned, edges, eparam, nbr_ptr, nbr_idx,
                  nbr_edge, tables, tab_of_edge, hb_xy, width, free_idx, site, reference, need_bonds, rng, out):
    m = edges.shape[0]
    bonds = np.zeros(m, dtype=np.bool_)
    e1 = np.zeros(m, dtype=np.bool_)
    e2 = np.zeros(m, dtype=np.bool_)
    for i in range(n_meas):
        _advance(between, scheme, sweep_kind, logw, theta, pinned, edges, eparam, nbr_ptr, nbr_idx, nbr_edge,
                 tables, tab_of_edge, hb_xy, width, free_idx, rng, bonds)
        bad = _measure(logw, theta, pinned, edges, eparam, site, reference, need_bonds, rng, bonds, e1, e2, out[i])
        if bad >= 0:
            return i
    return -1


# ----------------------------------------------------------------------
# engine arguments
# ----------------------------------------------------------------------


_NO_TABLES = (np.zeros((1, 4 * GRID + 3)), np.zeros(0, dtype=np.int64))


def _engine_args(cfg: SpinConfig, dyn: DynamicsConfig):
    g = cfg.graph
    scheme, sweep_kind = dyn.codes
    hb_xy = isinstance(cfg.weight, XYExp)
    tables, tab_of_edge = _NO_TABLES if (hb_xy or sweep_kind != _SWEEP_HB) else cfg.tables
    free_idx = np.flatnonzero(~cfg.pinned).astype(np.int64)
    return (scheme, sweep_kind, cfg.logw, cfg.theta, cfg.pinned, g.edges, cfg.eparam, g.nbr_ptr, g.nbr_idx,
            g.nbr_edge, tables, tab_of_edge, hb_xy, float(dyn.proposal_width), free_idx)


def _reference_angle(cfg: SpinConfig) -> float:
    """Boundary angle when all pinned spins agree, else 0."""
    pinned = cfg.theta[cfg.pinned]
    if pinned.size and np.allclose(pinned, pinned[0], atol=1e-12, rtol=0):
        return float(pinned[0])
    return 0.0


# ----------------------------------------------------------------------
# public steps
# ----------------------------------------------------------------------


@dataclass
class StepRecord:
    """What a cluster-swapping step did: the angle, the bonds and the flipped clusters."""

    nu: float
    bonds: np.ndarray
    theta_before: np.ndarray
    flipped: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


def cluster_swapping_step(cfg: SpinConfig, rng, record: bool = False):
    """One cluster-swapping step in place; returns ``cfg`` (and a :class:`StepRecord`)."""
    before = cfg.theta.copy()
    bonds = np.zeros(cfg.graph.n_edges, dtype=np.bool_)
    nu = _cluster_swap(cfg.logw, cfg.theta, cfg.pinned, cfg.graph.edges, cfg.eparam, rng, bonds)
    if record:
        flipped = np.abs(np.angle(np.exp(1j * (cfg.theta - before)))) > 1e-12
        return cfg, StepRecord(float(nu), bonds, before, flipped)
    return cfg


def wolff_step(cfg: SpinConfig, rng) -> int:
    """One Wolff move in place; returns the reflected cluster size (0 if none)."""
    g = cfg.graph
    free_idx = np.flatnonzero(~cfg.pinned).astype(np.int64)
    return int(_wolff(cfg.logw, cfg.theta, cfg.pinned, g.nbr_ptr, g.nbr_idx, g.nbr_edge, cfg.eparam, free_idx, rng))


def advance(cfg: SpinConfig, dyn: DynamicsConfig, n_steps: int, rng) -> SpinConfig:
    """Apply ``n_steps`` dynamics steps (each with its interleaved sweep)."""
    bonds = np.zeros(cfg.graph.n_edges, dtype=np.bool_)
    _advance(int(n_steps), *_engine_args(cfg, dyn), rng, bonds)
    return cfg


def default_site(g) -> int:
    """Centre of a box, otherwise the first unpinned vertex."""
    if g.shape:
        return g.index(*[s // 2 for s in g.shape])
    free = np.flatnonzero(~g.boundary)
    return int(free[0]) if free.size else 0


def run_chain(cfg: SpinConfig, dynamics: DynamicsConfig, observables=STANDARD, rng=None, *, n_measurements: int,
              site: int | None = None, reference: float | None = None, metadata: dict | None = None) -> dict:
    """Burn in, then alternate ``sweeps_between_measurements`` steps with a measurement.

    ``observables`` mixes names from ``STANDARD`` and callables
    ``f(cfg) -> float``.  Standard observables refer to ``site`` and to the
    angle ``reference`` (the boundary angle by default); bond-based ones
    draw fresh bonds from the current spins at every measurement.  Returns
    an ordered ``{name: ObservableSeries}``.
    """
    if n_measurements < 1:
        raise ValueError("n_measurements must be positive")
    rng = np.random.default_rng(rng)
    site = default_site(cfg.graph) if site is None else int(site)
    reference = _reference_angle(cfg) if reference is None else float(reference)
    names = []
    for ob in observables:
        if callable(ob):
            names.append(getattr(ob, "__name__", "observable"))
        elif ob in STANDARD:
            names.append(ob)
        else:
            raise ValueError(f"unknown observable {ob!r}")
    need_bonds = any(n in ("connect", "connect_both", "cos1_disconnected", "cos2_not_both") for n in names)
    args = _engine_args(cfg, dynamics)
    bonds = np.zeros(cfg.graph.n_edges, dtype=np.bool_)
    _advance(int(dynamics.burn_in), *args, rng, bonds)
    std = np.zeros((n_measurements, len(STANDARD)))
    custom = [ob for ob in observables if callable(ob)]
    if not custom:
        bad = _run_standard(int(n_measurements), int(dynamics.sweeps_between_measurements), *args, site, reference,
                            need_bonds, rng, std)
        if bad >= 0:
            _raise_infeasible(cfg, reference)
        extra = np.zeros((n_measurements, 0))
    else:
        extra = np.zeros((n_measurements, len(custom)))
        e1 = np.zeros(cfg.graph.n_edges, dtype=np.bool_)
        e2 = np.zeros(cfg.graph.n_edges, dtype=np.bool_)
        for i in range(n_measurements):
            _advance(int(dynamics.sweeps_between_measurements), *args, rng, bonds)
            if _measure(cfg.logw, cfg.theta, cfg.pinned, cfg.graph.edges, cfg.eparam, site, reference, need_bonds,
                        rng, bonds, e1, e2, std[i]) >= 0:
                _raise_infeasible(cfg, reference)
            extra[i] = [f(cfg) for f in custom]
    meta = {
        "scheme": dynamics.scheme,
        "interleave": dynamics.interleave,
        "burn_in": dynamics.burn_in,
        "sweeps_between_measurements": dynamics.sweeps_between_measurements,
        "site": site,
        "weight": repr(cfg.weight),
        "n_vertices": cfg.graph.n,
        **(metadata or {}),
    }
    out, k = {}, 0
    for ob, name in zip(observables, names):
        if callable(ob):
            out[name] = ObservableSeries(name, extra[:, k].copy(), meta)
            k += 1
        else:
            out[name] = ObservableSeries(name, std[:, STANDARD.index(name)].copy(), meta)
    return out


def _raise_infeasible(cfg, reference):
    from .bonds import sample_pair_bonds

    sample_pair_bonds(cfg.with_theta(cfg.theta - reference), np.random.default_rng(0))
    raise RuntimeError("pair-bond law reported infeasible but no edge could be identified")


def sweep_indices(dynamics: DynamicsConfig, n_measurements: int) -> np.ndarray:
    """Step count at each measurement, counted from the start of burn-in."""
    return dynamics.burn_in + dynamics.sweeps_between_measurements * np.arange(1, n_measurements + 1)


# ----------------------------------------------------------------------
# independent chains
# ----------------------------------------------------------------------


def chain_seed(seed: int, temp_idx: int, chain_idx: int) -> np.random.SeedSequence:
    """The seed of one chain; it does not depend on how chains are scheduled."""
    return np.random.SeedSequence([int(seed), int(temp_idx), int(chain_idx)])


def _run_task(task):
    make_cfg, dyn, observables, n_meas, seed, temp_idx, chain_idx, kw = task
    rng = np.random.default_rng(chain_seed(seed, temp_idx, chain_idx))
    cfg = make_cfg()
    series = run_chain(cfg, dyn, observables, rng, n_measurements=n_meas, **kw)
    return {name: s.values for name, s in series.items()}


def run_chains(make_cfg, dynamics: DynamicsConfig, observables=STANDARD, *, n_measurements: int, seed: int,
               n_chains: int = 1, temp_idx: int = 0, workers: int = 1, **kw) -> dict:
    """Run independent chains and concatenate their series in chain order.

    ``make_cfg`` must be picklable when ``workers > 1``.  Output is
    identical for any worker count.
    """
    tasks = [(make_cfg, dynamics, tuple(observables), n_measurements, seed, temp_idx, c, kw) for c in range(n_chains)]
    if workers > 1 and n_chains > 1:
        with ProcessPoolExecutor(max_workers=min(workers, n_chains)) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]
    meta = {"seed": seed, "n_chains": n_chains, "temp_idx": temp_idx, "scheme": dynamics.scheme}
    return {
        name: ObservableSeries(name, np.concatenate([r[name] for r in results]), meta) for name in results[0]
    }
