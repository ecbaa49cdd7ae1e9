"""Bond laws conditional on spins, their samplers, and the cluster swap maps.

Single bonds for a reflection axis ``R`` open with probability
``1 - w(R u_x, u_y) / w(u_x, u_y)`` when both spins lie strictly on the same
side of the axis.  Pair bonds use the axes ``R1`` (bond 1) and ``R2``
(bond 2) with a joint law fixed by ``(p, q, c)``.

Random numbers: one uniform per edge, in edge order, for both samplers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .graph import components, label_clusters
from .kernels import ANGLE_TOL, R1, R2, SERIES_SWITCH, TWO_PI, ReflectionAxis, Villain, WeightFunction, XYExp, engine_logw
from .spins import SpinConfig


class FeasibilityError(ValueError):
    """A pair-bond law violating ``max(0, p+q-1) <= c <= min(p, q)``."""

    def __init__(self, message, p=None, q=None, c=None, ux=None, uy=None, edge=None):
        super().__init__(message)
        self.p, self.q, self.c = p, q, c
        self.ux, self.uy, self.edge = ux, uy, edge


# ----------------------------------------------------------------------
# single-axis law
# ----------------------------------------------------------------------


def _same_side(ux, uy, nu):
    sx = np.sin(np.asarray(ux, dtype=float) - nu)
    sy = np.sin(np.asarray(uy, dtype=float) - nu)
    return (np.abs(sx) > ANGLE_TOL) & (np.abs(sy) > ANGLE_TOL) & (sx * sy > 0)


def single_bond_prob(w: WeightFunction, ux, uy, axis: ReflectionAxis):
    """Open probability of the bond ``xy`` for the reflection ``axis``."""
    ux = np.asarray(ux, dtype=float)
    uy = np.asarray(uy, dtype=float)
    lr = w.log_weight(axis.reflect(ux) - uy) - w.log_weight(ux - uy)
    p = -np.expm1(np.minimum(lr, 0.0))
    out = np.where(_same_side(ux, uy, axis.nu), p, 0.0)
    return out if out.ndim else float(out)


def single_bond_log_closed(w: WeightFunction, ux, uy, axis: ReflectionAxis):
    """``log(1 - p)`` without the cancellation of ``log1p(-p)`` when ``p`` is near 1."""
    ux = np.asarray(ux, dtype=float)
    uy = np.asarray(uy, dtype=float)
    lr = w.log_weight(axis.reflect(ux) - uy) - w.log_weight(ux - uy)
    out = np.where(_same_side(ux, uy, axis.nu), np.minimum(lr, 0.0), 0.0)
    return out if out.ndim else float(out)


# ----------------------------------------------------------------------
# pair law
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class JointBondLaw:
    """Per-edge joint law of ``(e1, e2)``.

    ``b0, b1, b2`` are the cells ``(0,0), (1,0), (0,1)``; they are stored in
    closed form rather than recomputed as ``1-p-q+c`` etc.
    """

    p: np.ndarray
    q: np.ndarray
    c: np.ndarray
    b0: np.ndarray
    b1: np.ndarray
    b2: np.ndarray

    def cells(self):
        """Probabilities of ``(1,1), (1,0), (0,1), (0,0)`` stacked on the last axis."""
        return np.stack(np.broadcast_arrays(self.c, self.b1, self.b2, self.b0), axis=-1)

    def feasible(self, tol=1e-12):
        lo = np.maximum(0.0, self.p + self.q - 1.0)
        hi = np.minimum(self.p, self.q)
        return (self.c >= lo - tol) & (self.c <= hi + tol) & (self.c >= -tol)


def _law_cells(logw, ux, uy, pi):
    """``(p, q, c, b0, b1, b2)`` for log-weight ``logw(d)``, in the dtype of the inputs."""
    l0 = logw(ux - uy)
    r1 = np.exp(logw(pi / 2 - ux - uy) - l0)  # w(R1 u_x, u_y) / w(u_x, u_y)
    r2 = np.exp(logw(-pi / 2 - ux - uy) - l0)  # w(R2 u_x, u_y) / w(u_x, u_y)
    rm = np.exp(logw(ux - uy - pi) - l0)  # w(u_x, -u_y) / w(u_x, u_y)
    s1 = _same_side(ux, uy, pi / 4)
    s2 = _same_side(ux, uy, -pi / 4)
    same_q = (_quadrant(ux, pi) == _quadrant(uy, pi)) & s1 & s2
    p = np.where(s1, 1 - r1, 0)
    q = np.where(s2, 1 - r2, 0)
    c = np.where(same_q, 1 - r1 - r2 + rm, 0)
    b0 = np.select([same_q, s1, s2], [rm, r1, r2], 1)
    b1 = np.select([same_q, s1], [r2 - rm, 1 - r1], 0)
    b2 = np.select([same_q, s2], [r1 - rm, 1 - r2], 0)
    return p, q, c, b0, b1, b2


def _quadrant(u, pi):
    k = np.floor(np.mod(u + pi / 4, 2 * pi) / (pi / 2)).astype(int)
    return np.minimum(k, 3)


def pair_bond_law(w: WeightFunction, ux, uy, c_rule="reflection", check=True) -> JointBondLaw:
    """Joint law of the bond pair on ``xy`` given the spins.

    ``c_rule="reflection"`` takes ``c = 1 - r1 - r2 + rm`` on spins in the
    same quadrant and ``c = 0`` otherwise, with ``r_i = w(R_i u_x, u_y)/w``
    and ``rm = w(u_x, -u_y)/w``.  ``"independent"`` takes ``c = p q`` and a
    callable gets ``(p, q, ux, uy)``.  An infeasible law raises
    :class:`FeasibilityError` when ``check`` is set.
    """
    ux = np.asarray(ux, dtype=float)
    uy = np.asarray(uy, dtype=float)
    p, q, c, b0, b1, b2 = _law_cells(w.log_weight, ux, uy, np.pi)
    if c_rule == "independent":
        c = p * q
    elif c_rule != "reflection":
        c = np.asarray(c_rule(p, q, ux, uy), dtype=float)
    if c_rule != "reflection":
        b0, b1, b2 = 1.0 - p - q + c, p - c, q - c
    law = JointBondLaw(p, q, c, b0, b1, b2)
    if check:
        bad = ~law.feasible()
        if np.any(bad):
            i = np.flatnonzero(np.ravel(bad))[0]
            pick = lambda a: float(np.ravel(np.broadcast_to(a, bad.shape))[i])  # noqa: E731
            raise FeasibilityError(
                f"pair-bond law infeasible: p={pick(p):.6g} q={pick(q):.6g} c={pick(c):.6g} "
                f"at theta_x={pick(ux):.6g} theta_y={pick(uy):.6g}",
                p=pick(p), q=pick(q), c=pick(c), ux=pick(ux), uy=pick(uy), edge=i,
            )
    return law


# ----------------------------------------------------------------------
# compiled per-edge samplers (shared with the dynamics)
# ----------------------------------------------------------------------


@njit(cache=True)
def _bond_open_prob(logw, a, b, param, nu):
    sa = np.sin(a - nu)
    sb = np.sin(b - nu)
    if abs(sa) <= ANGLE_TOL or abs(sb) <= ANGLE_TOL or sa * sb <= 0.0:
        return 0.0
    lr = engine_logw(logw, 2.0 * nu - a - b, param) - engine_logw(logw, a - b, param)
    return -math.expm1(min(lr, 0.0))


@njit(cache=True)
def _sample_single_bonds(logw, theta, edges, eparam, nu, rng, out):
    for e in range(edges.shape[0]):
        p = _bond_open_prob(logw, theta[edges[e, 0]], theta[edges[e, 1]], eparam[e], nu)
        out[e] = rng.random() < p


@njit(cache=True)
def _quadrant1(a):
    c = a + 0.25 * math.pi
    c = c - TWO_PI * np.floor(c / TWO_PI)
    k = int(c / (0.5 * math.pi))
    return min(k, 3)


@njit(cache=True)
def _pair_cells(logw, a, b, param):
    """Cells ``(c, b1, b2)`` of the pair law; ``b0`` is the remainder."""
    s1 = np.sin(a - 0.25 * math.pi) * np.sin(b - 0.25 * math.pi)
    s2 = np.sin(a + 0.25 * math.pi) * np.sin(b + 0.25 * math.pi)
    on1 = abs(np.sin(a - 0.25 * math.pi)) > ANGLE_TOL and abs(np.sin(b - 0.25 * math.pi)) > ANGLE_TOL and s1 > 0.0
    on2 = abs(np.sin(a + 0.25 * math.pi)) > ANGLE_TOL and abs(np.sin(b + 0.25 * math.pi)) > ANGLE_TOL and s2 > 0.0
    l0 = engine_logw(logw, a - b, param)
    r1 = math.exp(engine_logw(logw, 0.5 * math.pi - a - b, param) - l0)
    r2 = math.exp(engine_logw(logw, -0.5 * math.pi - a - b, param) - l0)
    if on1 and on2 and _quadrant1(a) == _quadrant1(b):
        rm = math.exp(engine_logw(logw, a - b - math.pi, param) - l0)
        return 1.0 - r1 - r2 + rm, r2 - rm, r1 - rm
    if on1:
        return 0.0, 1.0 - r1, 0.0
    if on2:
        return 0.0, 0.0, 1.0 - r2
    return 0.0, 0.0, 0.0


@njit(cache=True)
def _sample_pair_bonds(logw, theta, edges, eparam, rng, out1, out2):
    """Fill both bond families; returns the first infeasible edge or -1."""
    bad = -1
    for e in range(edges.shape[0]):
        c, b1, b2 = _pair_cells(logw, theta[edges[e, 0]], theta[edges[e, 1]], eparam[e])
        if bad < 0 and (c < -1e-12 or b1 < -1e-12 or b2 < -1e-12 or c + b1 + b2 > 1.0 + 1e-12):
            bad = e
        u = rng.random()
        out1[e] = u < c + b1
        out2[e] = u < c or (c + b1 <= u < c + b1 + b2)
    return bad


# ----------------------------------------------------------------------
# public samplers
# ----------------------------------------------------------------------


def sample_bonds(cfg: SpinConfig, axis: ReflectionAxis, rng) -> np.ndarray:
    """Independent bonds for ``axis``: one Bernoulli per edge in edge order."""
    out = np.zeros(cfg.graph.n_edges, dtype=np.bool_)
    _sample_single_bonds(cfg.logw, cfg.theta, cfg.graph.edges, cfg.eparam, float(axis.nu), rng, out)
    return out


def sample_pair_bonds(cfg: SpinConfig, rng, law: JointBondLaw | None = None):
    """Pair bonds ``(e1, e2)``, one uniform per edge split into the cells
    ``(1,1): c``, ``(1,0): p-c``, ``(0,1): q-c``, ``(0,0)``: rest.

    Without ``law`` the reflection law is used through the compiled path;
    an explicit ``law`` (one entry per edge) is sampled as given.
    """
    g = cfg.graph
    e1 = np.zeros(g.n_edges, dtype=np.bool_)
    e2 = np.zeros(g.n_edges, dtype=np.bool_)
    if law is None:
        bad = _sample_pair_bonds(cfg.logw, cfg.theta, g.edges, cfg.eparam, rng, e1, e2)
        if bad >= 0:
            a, b = (float(v) for v in cfg.theta[g.edges[bad]])
            c, b1, b2 = _pair_cells(cfg.logw, a, b, float(cfg.eparam[bad]))
            raise FeasibilityError(
                f"pair-bond law infeasible on edge {bad}: p={c + b1:.6g} q={c + b2:.6g} c={c:.6g} "
                f"at theta_x={a:.6g} theta_y={b:.6g}",
                p=c + b1, q=c + b2, c=c, ux=a, uy=b, edge=bad,
            )
        return e1, e2
    cells = np.broadcast_to(law.cells(), (g.n_edges, 4))
    if not np.all(law.feasible()):
        raise FeasibilityError("pair-bond law infeasible on some edge")
    u = rng.random(g.n_edges)
    cum = np.cumsum(cells, axis=1)
    e1[:] = u < cum[:, 1]
    e2[:] = (u < cum[:, 0]) | ((u >= cum[:, 1]) & (u < cum[:, 2]))
    return e1, e2


# ----------------------------------------------------------------------
# swap maps
# ----------------------------------------------------------------------


def _partition(cfg, bonds):
    labels, touches = label_clusters(cfg.graph.n, cfg.graph.edges, np.asarray(bonds, dtype=np.bool_), cfg.pinned)
    return labels, touches


def swap_map_sigma_z(cfg: SpinConfig, bonds, z: int, axis: ReflectionAxis) -> SpinConfig:
    """Reflect the cluster of ``z`` by ``axis`` unless it meets the boundary."""
    labels, touches = _partition(cfg, bonds)
    out = cfg.copy()
    if not touches[z]:
        members = labels == labels[z]
        out.theta[members] = axis.reflect(cfg.theta[members])
    return out


def radon_nikodym_single(cfg: SpinConfig, bonds, z: int, axis: ReflectionAxis, bond_prob=None) -> float:
    """Density of the law of ``(u, e)`` at the swapped state relative to ``(u, e)``.

    The product runs over edges leaving the cluster of ``z``; those bonds are
    closed, so each factor is ``w(Ru_x,u_y)/w(u_x,u_y) * (1-p')/(1-p)``.
    ``bond_prob(w, ux, uy, axis)`` overrides the bond law (negative controls).
    """
    labels, touches = _partition(cfg, bonds)
    if touches[z]:
        return 1.0
    if bond_prob is None:
        log_closed = single_bond_log_closed
    else:
        def log_closed(w, a, b, ax):
            return np.log1p(-np.asarray(bond_prob(w, a, b, ax)))
    g = cfg.graph
    inside = labels == labels[z]
    cut = inside[g.edges[:, 0]] != inside[g.edges[:, 1]]
    if not cut.any():
        return 1.0
    ends = g.edges[cut]
    swap = ~inside[ends[:, 0]]
    x = np.where(swap, ends[:, 1], ends[:, 0])
    y = np.where(swap, ends[:, 0], ends[:, 1])
    ux, uy = cfg.theta[x], cfg.theta[y]
    rux = axis.reflect(ux)
    if getattr(cfg.weight, "t", 1.0) is None:
        groups = [(_weight_for_edge(cfg, e), [k]) for k, e in enumerate(np.flatnonzero(cut))]
    else:
        groups = [(cfg.weight, slice(None))]
    log_rn = 0.0
    for w, k in groups:
        a, b, ra = ux[k], uy[k], rux[k]
        lw = w.log_weight(ra - b) - w.log_weight(a - b)
        log_rn += float(np.sum(lw + log_closed(w, ra, b, axis) - log_closed(w, a, b, axis)))
    return math.exp(log_rn)


def _weight_for_edge(cfg, e):
    w = cfg.weight
    if getattr(w, "t", 1.0) is None:
        return type(w)(t=float(cfg.graph.t[e]), precise=w.precise)
    return w


def pair_swap_map_sigma_i_z(cfg: SpinConfig, pair_bonds, z: int, i: int) -> SpinConfig:
    """Reflect the family-``i`` cluster of ``z`` by ``R_i`` unless it meets the boundary."""
    if i not in (1, 2):
        raise ValueError("bond family must be 1 or 2")
    axis = R1 if i == 1 else R2
    return swap_map_sigma_z(cfg, pair_bonds[i - 1], z, axis)


def side_classes(theta, axis: ReflectionAxis):
    """Side of ``axis`` for each angle: +1, -1, or 0 on the axis."""
    s = axis.side(theta)
    return np.where(np.abs(s) <= ANGLE_TOL, 0, np.sign(s)).astype(int)


# ----------------------------------------------------------------------
# measure-preservation identities for the pair law
# ----------------------------------------------------------------------


_PI_EXT = np.longdouble("3.14159265358979323846264338327950288")


def _ext_log_weight(w: WeightFunction):
    """``log w(d)`` in extended precision for the built-in weights."""
    if isinstance(w, Villain):
        if w.t is None:
            raise ValueError("need a single edge time")
        t = np.longdouble(w.t)
        two_pi = 2 * _PI_EXT
        if w.t < SERIES_SWITCH:
            def logw(d):
                x = d - two_pi * np.floor(d / two_pi + np.longdouble(0.5))
                s = sum(np.exp(-((x + two_pi * n) ** 2) / (2 * t)) for n in range(-12, 13))
                return np.log(s) - np.log(two_pi * t) / 2
        else:
            def logw(d):
                s = 1 + 2 * sum(np.exp(-np.longdouble(n * n) * t / 2) * np.cos(n * d) for n in range(1, 13))
                return np.log(s) - np.log(two_pi)
        return logw
    if isinstance(w, XYExp):
        beta = np.longdouble(w.beta)
        return lambda d: beta * np.cos(d)
    return lambda d: np.asarray(w.log_weight(d), dtype=np.longdouble)


def pair_swap_case_identities(w: WeightFunction, ux, uy):
    """Residuals of the two identities behind the pair swap by ``R1``.

    For an edge leaving the reflected cluster, bond 1 is closed, so either
    both bonds are closed or only bond 2 is open, and measure preservation
    reduces to

        w(R1 u_x, u_y)/w(u_x, u_y) * b0(R1 u_x, u_y)/b0(u_x, u_y) = 1,
        w(R1 u_x, u_y)/w(u_x, u_y) * b2(R1 u_x, u_y)/b2(u_x, u_y) = 1 (b2 > 0).

    The cells are differences of nearly equal weights when a spin is close
    to an axis, so the check runs in extended precision (Villain and XY;
    other weights use their float64 ``log_weight``).

    Returns a list of ``(name, quadrant pair, residual array)``; the
    quadrant pair is ``(k_x, k_y)`` with ``0`` the arc ``[-pi/4, pi/4)``.
    """
    ux = np.atleast_1d(np.asarray(ux, dtype=float)).astype(np.longdouble)
    uy = np.atleast_1d(np.asarray(uy, dtype=float)).astype(np.longdouble)
    logw = _ext_log_weight(w)
    rux = _PI_EXT / 2 - ux
    old = _law_cells(logw, ux, uy, _PI_EXT)
    new = _law_cells(logw, rux, uy, _PI_EXT)
    log_ratio = logw(rux - uy) - logw(ux - uy)
    qx, qy = _quadrant(ux, _PI_EXT), _quadrant(uy, _PI_EXT)
    out = []
    for name, k in (("b0", 3), ("b2", 5)):
        b_old, b_new = old[k], new[k]
        ok = b_old > 0
        res = np.full(ux.shape, np.nan)
        res[ok] = np.abs(np.exp(log_ratio[ok]) * b_new[ok] / b_old[ok] - 1).astype(float)
        for kx in range(4):
            for ky in range(4):
                sel = ok & (qx == kx) & (qy == ky)
                if sel.any():
                    out.append((name, (kx, ky), res[sel]))
    return out


# ----------------------------------------------------------------------
# serialization
# ----------------------------------------------------------------------


def bonds_to_bits(bonds) -> str:
    """Bit string in edge order; pair bonds are written as ``e1`` then ``e2`` joined by ``/``."""
    if isinstance(bonds, tuple):
        return "/".join(bonds_to_bits(b) for b in bonds)
    return "".join("1" if b else "0" for b in np.asarray(bonds, dtype=bool))


def bonds_from_bits(text: str):
    if "/" in text:
        return tuple(bonds_from_bits(part) for part in text.split("/"))
    if set(text) - {"0", "1"}:
        raise ValueError("bond string must contain only 0 and 1")
    return np.array([ch == "1" for ch in text], dtype=bool)


def bond_clusters(cfg: SpinConfig, bonds):
    """Cluster partition of ``bonds`` with the pinned vertices as boundary."""
    if np.array_equal(cfg.pinned, cfg.graph.boundary):
        return components(cfg.graph, bonds)
    from .graph import ClusterPartition

    return ClusterPartition(*_partition(cfg, bonds))


__all__ = [
    "FeasibilityError",
    "JointBondLaw",
    "bond_clusters",
    "bonds_from_bits",
    "bonds_to_bits",
    "pair_swap_case_identities",
    "pair_bond_law",
    "pair_swap_map_sigma_i_z",
    "radon_nikodym_single",
    "sample_bonds",
    "sample_pair_bonds",
    "side_classes",
    "single_bond_log_closed",
    "single_bond_prob",
    "swap_map_sigma_z",
]
