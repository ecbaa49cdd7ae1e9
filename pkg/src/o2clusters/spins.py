"""Spin configurations and single-site samplers for ``prod_e w(u_x, u_y)``.

Random numbers are consumed in vertex order:

* heat bath, tabulated conditional: one uniform per site;
* heat bath, XY rejection: two uniforms per trial;
* Metropolis: two uniforms per site (proposal, then acceptance), the
  acceptance uniform being drawn even when the move is certain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .graph import Graph
from .kernels import TWO_PI, Villain, WeightFunction, XYExp, engine_logw, wrap

GRID = 4096
REFINE = 4


@njit(cache=True)
def _wrap1(x):
    y = x - TWO_PI * np.floor(x / TWO_PI)
    if y >= TWO_PI:
        y = 0.0
    return y


@njit(cache=True)
def _local_logw(logw, theta, v, value, nbr_ptr, nbr_idx, nbr_edge, eparam):
    s = 0.0
    for k in range(nbr_ptr[v], nbr_ptr[v + 1]):
        s += engine_logw(logw, value - theta[nbr_idx[k]], eparam[nbr_edge[k]])
    return s


@njit(cache=True)
def _metropolis_site(logw, theta, v, width, nbr_ptr, nbr_idx, nbr_edge, eparam, rng):
    old = theta[v]
    new = _wrap1(old + width * (2.0 * rng.random() - 1.0))
    dl = _local_logw(logw, theta, v, new, nbr_ptr, nbr_idx, nbr_edge, eparam) - _local_logw(
        logw, theta, v, old, nbr_ptr, nbr_idx, nbr_edge, eparam
    )
    if rng.random() < np.exp(min(dl, 0.0)):
        theta[v] = new
        return True
    return False


@njit(cache=True)
def _metropolis_sweep(logw, theta, pinned, width, nbr_ptr, nbr_idx, nbr_edge, eparam, rng):
    acc = 0
    for v in range(theta.shape[0]):
        if not pinned[v]:
            acc += _metropolis_site(logw, theta, v, width, nbr_ptr, nbr_idx, nbr_edge, eparam, rng)
    return acc


@njit(cache=True)
def _conditional_on_grid(theta, v, tables, tab_of_edge, nbr_ptr, nbr_idx, nbr_edge, m):
    """Unnormalized conditional density of site ``v`` at ``2 pi i / m``.

    Each table row holds ``log w`` at ``d = 2 pi j / (m * refine)``, padded
    with one wrapped entry in front and two behind.  Because the grid is
    uniform, one neighbour shifts every grid point by the same fractional
    table offset, so the four Lagrange weights are computed once.
    """
    n_tab = tables.shape[1] - 3
    refine = n_tab // m
    ht = TWO_PI / n_tab
    logd = np.zeros(m)
    for k in range(nbr_ptr[v], nbr_ptr[v + 1]):
        tab = tables[tab_of_edge[nbr_edge[k]]]
        s = theta[nbr_idx[k]] / ht
        mm = np.floor(s)
        x = 1.0 - (s - mm)
        base = -int(mm) - 1
        if x >= 1.0:
            x -= 1.0
            base += 1
        wa = -x * (x - 1.0) * (x - 2.0) / 6.0
        wb = (x + 1.0) * (x - 1.0) * (x - 2.0) / 2.0
        wc = -(x + 1.0) * x * (x - 2.0) / 2.0
        wd = (x + 1.0) * x * (x - 1.0) / 6.0
        j = base % n_tab
        for i in range(m):
            # padded index of node j is j + 1
            logd[i] += wa * tab[j] + wb * tab[j + 1] + wc * tab[j + 2] + wd * tab[j + 3]
            j += refine
            if j >= n_tab:
                j -= n_tab
    top = logd.max()
    return np.exp(logd - top)


@njit(cache=True)
def sample_from_grid(dens, u):
    """Inverse-CDF draw from a periodic density tabulated on a uniform grid.

    The cumulative trapezoid sum carries the Euler-Maclaurin endpoint
    correction, and the density is taken linear inside the selected cell.
    """
    m = dens.shape[0]
    h = TWO_PI / m
    deriv = np.empty(m + 1)
    deriv[0] = (dens[1] - dens[m - 1]) / (2.0 * h)
    for i in range(1, m - 1):
        deriv[i] = (dens[i + 1] - dens[i - 1]) / (2.0 * h)
    deriv[m - 1] = (dens[0] - dens[m - 2]) / (2.0 * h)
    deriv[m] = deriv[0]
    cdf = np.empty(m + 1)
    cdf[0] = 0.0
    for i in range(m):
        nxt = dens[i + 1] if i + 1 < m else dens[0]
        step = 0.5 * h * (dens[i] + nxt) - h * h / 12.0 * (deriv[i + 1] - deriv[i])
        cdf[i + 1] = cdf[i] + max(step, 0.0)
    target = u * cdf[m]
    lo, hi = 0, m
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if cdf[mid] <= target:
            lo = mid
        else:
            hi = mid
    mass = cdf[lo + 1] - cdf[lo]
    r = (target - cdf[lo]) / mass if mass > 0 else 0.0
    d0 = dens[lo]
    delta = dens[(lo + 1) % m] - d0
    half = d0 + 0.5 * delta
    if half <= 0.0:
        s = r
    else:
        disc = d0 * d0 + 2.0 * delta * r * half
        s = 2.0 * r * half / (d0 + np.sqrt(max(disc, 0.0)))
    s = min(max(s, 0.0), 1.0)
    return _wrap1((lo + s) * h)


@njit(cache=True)
def _heat_bath_table_site(theta, v, tables, tab_of_edge, nbr_ptr, nbr_idx, nbr_edge, m, rng):
    dens = _conditional_on_grid(theta, v, tables, tab_of_edge, nbr_ptr, nbr_idx, nbr_edge, m)
    theta[v] = sample_from_grid(dens, rng.random())


@njit(cache=True)
def _heat_bath_table_sweep(theta, pinned, tables, tab_of_edge, nbr_ptr, nbr_idx, nbr_edge, m, rng):
    for v in range(theta.shape[0]):
        if not pinned[v]:
            _heat_bath_table_site(theta, v, tables, tab_of_edge, nbr_ptr, nbr_idx, nbr_edge, m, rng)


@njit(cache=True)
def _heat_bath_xy_site(theta, v, nbr_ptr, nbr_idx, nbr_edge, eparam, rng):
    # conditional is von Mises(mu, kappa); uniform envelope scaled by its maximum
    c = 0.0
    s = 0.0
    for k in range(nbr_ptr[v], nbr_ptr[v + 1]):
        b = eparam[nbr_edge[k]]
        c += b * np.cos(theta[nbr_idx[k]])
        s += b * np.sin(theta[nbr_idx[k]])
    kappa = np.sqrt(c * c + s * s)
    mu = np.arctan2(s, c)
    while True:
        prop = TWO_PI * rng.random()
        if rng.random() < np.exp(kappa * (np.cos(prop - mu) - 1.0)):
            theta[v] = prop
            return


@njit(cache=True)
def _heat_bath_xy_sweep(theta, pinned, nbr_ptr, nbr_idx, nbr_edge, eparam, rng):
    for v in range(theta.shape[0]):
        if not pinned[v]:
            _heat_bath_xy_site(theta, v, nbr_ptr, nbr_idx, nbr_edge, eparam, rng)


def log_weight_tables(w: WeightFunction, eparam, m=GRID, refine=REFINE):
    """Padded tables of ``log w`` on ``2 pi j / (m refine)``, one per distinct edge parameter."""
    values, tab_of_edge = np.unique(np.asarray(eparam, dtype=float), return_inverse=True)
    d = np.arange(m * refine) * (TWO_PI / (m * refine))
    tables = np.empty((len(values), m * refine))
    for i, p in enumerate(values):
        if isinstance(w, Villain):
            tables[i] = Villain(t=float(p), precise=w.precise).log_weight(d)
        elif isinstance(w, XYExp):
            tables[i] = XYExp(beta=float(p)).log_weight(d)
        else:
            tables[i] = w.log_weight(d)
    padded = np.concatenate([tables[:, -1:], tables, tables[:, :2]], axis=1)
    return np.ascontiguousarray(padded), tab_of_edge.astype(np.int64)


@dataclass(eq=False)
class SpinConfig:
    """One angle per vertex; boundary vertices are pinned.

    ``theta`` is mutated in place by the samplers.
    """

    graph: Graph
    weight: WeightFunction
    theta: np.ndarray
    pinned: np.ndarray = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.theta = np.ascontiguousarray(wrap(np.asarray(self.theta, dtype=float).copy()))
        if self.theta.shape != (self.graph.n,):
            raise ValueError("need one angle per vertex")
        if self.pinned is None:
            self.pinned = self.graph.boundary.copy()
        self.pinned = np.asarray(self.pinned, dtype=bool)

    @classmethod
    def new(cls, graph, weight, boundary_angle=0.0, init="aligned", rng=None):
        """Fresh configuration with ``boundary_angle`` on the boundary.

        ``init`` is ``"aligned"`` (every spin at the boundary angle) or
        ``"random"`` (unpinned spins uniform, needs ``rng``).
        """
        theta = np.full(graph.n, float(boundary_angle))
        if init == "random":
            free = ~graph.boundary
            theta[free] = TWO_PI * rng.random(int(free.sum()))
        elif init != "aligned":
            raise ValueError(f"unknown init {init!r}")
        return cls(graph, weight, theta)

    def copy(self) -> "SpinConfig":
        out = SpinConfig(self.graph, self.weight, self.theta.copy(), self.pinned.copy())
        out._cache = self._cache
        return out

    def with_theta(self, theta) -> "SpinConfig":
        out = self.copy()
        out.theta = np.ascontiguousarray(wrap(np.asarray(theta, dtype=float).copy()))
        return out

    # -- compiled-engine inputs -----------------------------------------------

    @property
    def eparam(self) -> np.ndarray:
        if "eparam" not in self._cache:
            self._cache["eparam"] = self.weight.edge_params(self.graph)
        return self._cache["eparam"]

    @property
    def tables(self):
        if "tables" not in self._cache:
            self._cache["tables"] = log_weight_tables(self.weight, self.eparam)
        return self._cache["tables"]

    @property
    def logw(self):
        """Weight data for the compiled engine (see ``engine_logw``)."""
        if "logw" not in self._cache:
            self._cache["logw"] = self.weight.engine_spec
        return self._cache["logw"]

    def adjacency(self):
        g = self.graph
        return g.nbr_ptr, g.nbr_idx, g.nbr_edge


def heat_bath_update(cfg: SpinConfig, x: int, rng) -> bool:
    """Resample ``theta[x]`` from its full conditional; False for a pinned site."""
    if cfg.pinned[x]:
        return False
    if isinstance(cfg.weight, XYExp):
        _heat_bath_xy_site(cfg.theta, x, *cfg.adjacency(), cfg.eparam, rng)
    else:
        tables, tab_of_edge = cfg.tables
        _heat_bath_table_site(cfg.theta, x, tables, tab_of_edge, *cfg.adjacency(), GRID, rng)
    return True


def metropolis_update(cfg: SpinConfig, x: int, proposal_width: float, rng) -> bool:
    """One Metropolis move at ``x`` with a uniform proposal of half-width ``proposal_width``."""
    if cfg.pinned[x]:
        return False
    return bool(_metropolis_site(cfg.logw, cfg.theta, x, float(proposal_width), *cfg.adjacency(), cfg.eparam, rng))


def sweep(cfg: SpinConfig, scheme: str, rng, proposal_width: float = math.pi / 2) -> int:
    """Update every unpinned vertex once in index order; returns accepted moves."""
    if scheme == "heat_bath":
        if isinstance(cfg.weight, XYExp):
            _heat_bath_xy_sweep(cfg.theta, cfg.pinned, *cfg.adjacency(), cfg.eparam, rng)
        else:
            tables, tab_of_edge = cfg.tables
            _heat_bath_table_sweep(cfg.theta, cfg.pinned, tables, tab_of_edge, *cfg.adjacency(), GRID, rng)
        return int((~cfg.pinned).sum())
    if scheme == "metropolis":
        return int(
            _metropolis_sweep(cfg.logw, cfg.theta, cfg.pinned, float(proposal_width), *cfg.adjacency(), cfg.eparam, rng)
        )
    raise ValueError(f"unknown sweep scheme {scheme!r}")


# ----------------------------------------------------------------------
# snapshots
# ----------------------------------------------------------------------


def snapshot_text(cfg: SpinConfig, metadata: dict | None = None, bonds: str | None = None) -> str:
    """CSV snapshot: ``# key=value`` metadata lines, then ``vertex,theta,pinned``."""
    lines = [f"# {k}={v}" for k, v in (metadata or {}).items()]
    if bonds is not None:
        lines.append(f"# bonds={bonds}")
    lines.append("vertex,theta,pinned")
    lines += [f"{i},{th:.17g},{int(p)}" for i, (th, p) in enumerate(zip(cfg.theta.tolist(), cfg.pinned.tolist()))]
    return "\n".join(lines) + "\n"


def parse_snapshot(text: str):
    """Inverse of ``snapshot_text``: returns ``(theta, pinned, metadata)``."""
    meta, rows = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
        elif line and not line.startswith("vertex"):
            rows.append(line.split(","))
    theta = np.array([float(r[1]) for r in rows])
    pinned = np.array([r[2] == "1" for r in rows])
    return theta, pinned, meta


def save_snapshot(cfg, path, metadata=None, bonds=None):
    Path(path).write_text(snapshot_text(cfg, metadata, bonds))


def load_snapshot(path, graph, weight):
    theta, pinned, meta = parse_snapshot(Path(path).read_text())
    return SpinConfig(graph, weight, theta, pinned), meta
