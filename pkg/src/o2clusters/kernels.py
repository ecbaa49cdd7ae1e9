"""Heat kernels on the circle, edge weights and reflections of the circle.

Conventions
-----------
Angles are radians; canonical representatives live in ``[0, 2*pi)``.
``wrapped_heat_kernel`` is a density with respect to ``d theta`` on the
circle, so it integrates to one over a period.  The edge weight of the
Villain model is that density; the constant ``(2 pi t)^{|V|/2}`` relating
it to the Villain energy is irrelevant for every ratio computed here.

Series evaluation follows a two-sided rule: for ``t < 2*pi`` the
Gaussian-side (image) sum is used, truncated to ``|n| <= 2``; for
``t >= 2*pi`` the Fourier side, truncated to ``n in {1, 2}``.  Passing
``precise=True`` keeps fifty terms on whichever side is selected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi
SERIES_SWITCH = TWO_PI
FAST_TERMS = 2
PRECISE_TERMS = 50
ANGLE_TOL = 1e-12


def wrap(theta):
    """Reduce angles to ``[0, 2*pi)``.

    ``np.mod`` can return exactly ``2*pi`` for tiny negative inputs; those
    are folded back to zero.
    """
    out = np.mod(theta, TWO_PI)
    if np.ndim(out) == 0:
        out = float(out)
        return 0.0 if out >= TWO_PI else out
    out[out >= TWO_PI] = 0.0
    return out


def _centered(x):
    """Representative of ``x`` modulo ``2*pi`` in ``[-pi, pi)``."""
    return x - TWO_PI * np.floor(x / TWO_PI + 0.5)


def _check_t(t):
    if not np.all(np.asarray(t) > 0) or not np.all(np.isfinite(t)):
        raise ValueError(f"time parameter must be positive and finite, got {t!r}")


def _gaussian_side(x, t, terms):
    x = _centered(np.asarray(x, dtype=float))
    total = np.zeros(np.broadcast(x, t).shape)
    for n in range(-terms, terms + 1):
        y = x + TWO_PI * n
        total = total + np.exp(-y * y / (2.0 * t))
    return total


def _fourier_side(x, t, terms):
    # f_t(x) = sqrt(2 pi t)/(2 pi) * (1 + 2 sum_n e^{-n^2 t/2} cos(n x))
    x = np.asarray(x, dtype=float)
    total = np.ones(np.broadcast(x, t).shape)
    for n in range(1, terms + 1):
        total = total + 2.0 * np.exp(-0.5 * n * n * t) * np.cos(n * x)
    return np.sqrt(TWO_PI * t) / TWO_PI * total


def f_t(x, t, *, side="auto", terms=None, precise=False):
    """Periodized Gaussian ``sum_n exp(-(x + 2 n pi)^2 / 2t)``.

    Even and ``2*pi``-periodic; ``p_t(a, b) = f_t(a - b) / sqrt(2 pi t)``.
    """
    _check_t(t)
    if terms is None:
        terms = PRECISE_TERMS if precise else FAST_TERMS
    if side == "gaussian":
        return _gaussian_side(x, t, terms)
    if side == "fourier":
        return _fourier_side(x, t, terms)
    if side != "auto":
        raise ValueError(f"unknown series side {side!r}")
    t_arr = np.asarray(t, dtype=float)
    small = t_arr < SERIES_SWITCH
    if np.all(small):
        return _gaussian_side(x, t, terms)
    if not np.any(small):
        return _fourier_side(x, t, terms)
    return np.where(
        small,
        _gaussian_side(x, np.where(small, t_arr, 1.0), terms),
        _fourier_side(x, np.where(small, SERIES_SWITCH, t_arr), terms),
    )


def wrapped_heat_kernel(th1, th2, t, *, side="auto", terms=None, precise=False):
    """Transition density of Brownian motion on the circle after time ``t``."""
    return f_t(np.subtract(th1, th2), t, side=side, terms=terms, precise=precise) / np.sqrt(TWO_PI * t)


def wrapped_heat_kernel_dual(th1, th2, t, *, terms=PRECISE_TERMS):
    """Same density evaluated through its Fourier (Poisson-dual) series."""
    return wrapped_heat_kernel(th1, th2, t, side="fourier", terms=terms)


def g_t(th1, th2, t, **kw):
    """Open probability of the cluster-swapping step for spins in ``(-pi/2, pi/2)``."""
    direct = f_t(np.subtract(th1, th2), t, **kw)
    image = f_t(np.add(th1, th2) - math.pi, t, **kw)
    return (direct - image) / direct


def _image_terms(t, cutoff=60.0):
    # number of images with exponent below `cutoff` for every argument in [-2pi, 2pi]
    return int(math.ceil((math.sqrt(2.0 * cutoff * float(np.max(t))) + 2 * TWO_PI) / TWO_PI)) + 1


def _check_arc(name, theta, half_width):
    theta = np.asarray(theta, dtype=float)
    c = _centered(theta)
    if np.any(np.abs(c) > half_width + ANGLE_TOL):
        raise ValueError(f"{name} must lie in [-{half_width:.6g}, {half_width:.6g}] modulo 2*pi")
    return c


def reflected_kernel_half(th1, th2, t, *, form="images", precise=False):
    """Kernel of Brownian motion on ``[-pi/2, pi/2]`` killed at the endpoints.

    ``form="images"`` sums the alternating image series on the line;
    ``form="difference"`` uses one reflection of the circle kernel,
    ``p_t(a, b) - p_t(a, pi - b)``.  Both return zero on the boundary.
    """
    _check_t(t)
    a = _check_arc("th1", th1, math.pi / 2)
    b = _check_arc("th2", th2, math.pi / 2)
    if form == "images":
        n_img = _image_terms(t)
        total = 0.0
        for n in range(-n_img, n_img + 1):
            total = total + np.exp(-((a - b + 2 * n * math.pi) ** 2) / (2 * t)) - np.exp(
                -((a + b + (2 * n - 1) * math.pi) ** 2) / (2 * t)
            )
        out = total / np.sqrt(TWO_PI * t)
    elif form == "difference":
        out = wrapped_heat_kernel(a, b, t, precise=precise) - wrapped_heat_kernel(a, math.pi - b, t, precise=precise)
    else:
        raise ValueError(f"unknown form {form!r}")
    on_edge = (np.abs(np.abs(a) - math.pi / 2) < ANGLE_TOL) | (np.abs(np.abs(b) - math.pi / 2) < ANGLE_TOL)
    out = np.where(on_edge, 0.0, np.maximum(out, 0.0))
    return out if np.ndim(out) else float(out)


def reflected_kernel_quarter(th1, th2, t, *, form="reflections", precise=False):
    """Kernel of Brownian motion on ``[-pi/4, pi/4]`` killed at the endpoints.

    ``form="reflections"`` combines four circle kernels,
    ``w(u, v) + w(u, -v) - w(R1 u, v) - w(R2 u, v)``;
    ``form="images"`` sums the image series with period ``pi``.
    """
    _check_t(t)
    a = _check_arc("th1", th1, math.pi / 4)
    b = _check_arc("th2", th2, math.pi / 4)
    if form == "reflections":
        k = lambda x, y: wrapped_heat_kernel(x, y, t, precise=precise)  # noqa: E731
        out = k(a, b) + k(a, b + math.pi) - k(math.pi / 2 - a, b) - k(-math.pi / 2 - a, b)
    elif form == "images":
        n_img = 2 * _image_terms(t)
        total = 0.0
        for n in range(-n_img, n_img + 1):
            total = total + np.exp(-((a - b + n * math.pi) ** 2) / (2 * t)) - np.exp(
                -((a + b + math.pi / 2 + n * math.pi) ** 2) / (2 * t)
            )
        out = total / np.sqrt(TWO_PI * t)
    else:
        raise ValueError(f"unknown form {form!r}")
    on_edge = (np.abs(np.abs(a) - math.pi / 4) < ANGLE_TOL) | (np.abs(np.abs(b) - math.pi / 4) < ANGLE_TOL)
    out = np.where(on_edge, 0.0, np.maximum(out, 0.0))
    return out if np.ndim(out) else float(out)


# ----------------------------------------------------------------------
# compiled log-weights, one per weight family: logw(d, param)
# ----------------------------------------------------------------------


@njit(cache=True)
def _logw_villain(d, t):
    x = d - TWO_PI * np.floor(d / TWO_PI + 0.5)
    if t < SERIES_SWITCH:
        s = 0.0
        for n in range(-FAST_TERMS, FAST_TERMS + 1):
            y = x + TWO_PI * n
            s += np.exp(-y * y / (2.0 * t))
        return np.log(s) - 0.5 * np.log(TWO_PI * t)
    s = 1.0
    for n in range(1, FAST_TERMS + 1):
        s += 2.0 * np.exp(-0.5 * n * n * t) * np.cos(n * x)
    return np.log(s) - np.log(TWO_PI)


@njit(cache=True)
def _logw_xy(d, beta):
    return beta * np.cos(d)


ENGINE_VILLAIN, ENGINE_XY, ENGINE_TABLE = 0.0, 1.0, 2.0
ENGINE_TABLE_SIZE = 1 << 16


@njit(cache=True)
def engine_logw(spec, d, param):
    """``log w(d)`` inside compiled code.

    ``spec[0]`` selects the family; tabulated weights carry ``log w`` on a
    uniform grid of ``[0, 2 pi)`` in ``spec[1:]`` and are interpolated
    linearly.  Passing data instead of a compiled function keeps every
    caller cacheable on disk.
    """
    kind = spec[0]
    if kind == ENGINE_VILLAIN:
        return _logw_villain(d, param)
    if kind == ENGINE_XY:
        return _logw_xy(d, param)
    n = spec.shape[0] - 1
    x = (d - TWO_PI * np.floor(d / TWO_PI)) * (n / TWO_PI)
    i = int(x)
    if i >= n:
        i = n - 1
    f = x - i
    j = i + 1 if i + 1 < n else 0
    return spec[1 + i] + f * (spec[1 + j] - spec[1 + i])


# ----------------------------------------------------------------------
# weight functions
# ----------------------------------------------------------------------


class WeightFunction:
    """Rotation- and reflection-invariant edge weight ``w(u, v)``.

    Subclasses provide ``log_weight(d)`` for the angle difference ``d``.
    """

    name = "weight"
    param = 0.0

    def log_weight(self, d):
        raise NotImplementedError

    def __call__(self, u, v):
        return np.exp(self.log_weight(np.subtract(u, v)))

    def ratio(self, u1, v1, u2, v2):
        """``w(u1, v1) / w(u2, v2)`` evaluated in the log domain."""
        return np.exp(self.log_weight(np.subtract(u1, v1)) - self.log_weight(np.subtract(u2, v2)))

    def edge_params(self, graph):
        return np.full(graph.n_edges, float(self.param))

    @property
    def engine_spec(self) -> np.ndarray:
        """Data for :func:`engine_logw`; by default a table of ``log_weight``."""
        d = np.arange(ENGINE_TABLE_SIZE) * (TWO_PI / ENGINE_TABLE_SIZE)
        return np.concatenate([[ENGINE_TABLE], np.asarray(self.log_weight(d), dtype=float)])


@dataclass(frozen=True)
class Villain(WeightFunction):
    """Villain weight: the circle heat kernel at time ``t``.

    With ``t=None`` the time of each edge is read from the graph.
    """

    t: float | None = 1.0
    precise: bool = False
    name = "villain"

    def __post_init__(self):
        if self.t is not None:
            _check_t(self.t)

    @property
    def param(self):
        return self.t

    def log_weight(self, d):
        if self.t is None:
            raise ValueError("Villain(t=None) only has per-edge times; evaluate through a graph")
        return np.log(f_t(d, self.t, precise=self.precise)) - 0.5 * np.log(TWO_PI * self.t)

    def edge_params(self, graph):
        if self.t is None:
            return np.asarray(graph.t, dtype=float).copy()
        return np.full(graph.n_edges, float(self.t))

    @property
    def engine_spec(self):
        return np.array([ENGINE_VILLAIN])


@dataclass(frozen=True)
class XYExp(WeightFunction):
    """XY weight ``exp(beta cos(u - v))``."""

    beta: float = 1.0
    name = "xy"

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ValueError("beta must be positive and finite")

    @property
    def param(self):
        return self.beta

    def log_weight(self, d):
        return self.beta * np.cos(d)

    @property
    def engine_spec(self):
        return np.array([ENGINE_XY])


@dataclass(frozen=True, eq=False)
class RhoCos(WeightFunction):
    """Weight ``rho(cos(u - v))`` for an increasing positive ``rho`` on ``[-1, 1]``.

    ``rho`` must accept numpy arrays.  ``convex`` is detected on a grid
    when not given.  Compiled dynamics read ``log w`` from a table with
    ``2^16`` points, linearly interpolated (absolute error of order
    ``1e-9 max|(log w)''|``); the Python-level functions use ``rho`` itself.
    """

    rho: Callable = field(default=np.exp)
    convex: bool | None = None
    grid: int = 2001
    name = "rho"

    def __post_init__(self):
        s = np.linspace(-1.0, 1.0, self.grid)
        r = np.asarray(self.rho(s), dtype=float)
        if not np.all(np.isfinite(r)) or np.any(r <= 0):
            raise ValueError("rho must be positive and finite on [-1, 1]")
        if np.any(np.diff(r) < 0):
            raise ValueError("rho must be increasing on [-1, 1]")
        if self.convex is None:
            second = r[2:] - 2 * r[1:-1] + r[:-2]
            object.__setattr__(self, "convex", bool(np.all(second > 0)))
        object.__setattr__(self, "_spec", None)

    def log_weight(self, d):
        return np.log(self.rho(np.cos(d)))

    @property
    def engine_spec(self):
        if self._spec is None:
            object.__setattr__(self, "_spec", WeightFunction.engine_spec.fget(self))
        return self._spec


RHO_FAMILIES = ("exp", "quadratic")


def rho_family(name: str, t: float) -> RhoCos:
    """Built-in ``rho`` weights at temperature ``t``.

    ``exp`` is ``exp(s / (2t))`` (the XY weight at ``beta = 1/(2t)``);
    ``quadratic`` is ``(1 + t + s)^2``, positive, increasing and convex on
    ``[-1, 1]``.
    """
    _check_t(t)
    if name == "exp":
        b = 1.0 / (2.0 * t)
        def rho(s):
            return np.exp(b * s)
    elif name == "quadratic":
        a = 1.0 + t
        def rho(s):
            return (a + s) ** 2
    else:
        raise ValueError(f"unknown rho family {name!r}; expected one of {RHO_FAMILIES}")
    return RhoCos(rho=rho)


def weight(w: WeightFunction, u, v):
    """Evaluate the edge weight ``w(u, v)``."""
    return w(u, v)


# ----------------------------------------------------------------------
# reflections
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class ReflectionAxis:
    """Reflection ``z -> e^{2 i nu} conj(z)`` fixing ``+-e^{i nu}``."""

    nu: float

    def reflect(self, u):
        return wrap(2.0 * self.nu - np.asarray(u, dtype=float))

    def side(self, u):
        """Signed distance-like coordinate; equal signs mean the same side."""
        return np.sin(np.asarray(u, dtype=float) - self.nu)

    def same_side(self, u, v):
        su, sv = self.side(u), self.side(v)
        return (np.abs(su) > ANGLE_TOL) & (np.abs(sv) > ANGLE_TOL) & (su * sv > 0)


R = ReflectionAxis(math.pi / 2)
R1 = ReflectionAxis(math.pi / 4)
R2 = ReflectionAxis(-math.pi / 4)


def reflect(axis: ReflectionAxis, u):
    return axis.reflect(u)


def quadrant(u):
    """Index 0..3 of the arc ``[-pi/4 + k pi/2, pi/4 + k pi/2)`` containing ``u``."""
    c = np.mod(np.asarray(u, dtype=float) + math.pi / 4, TWO_PI)
    q = np.floor(c / (math.pi / 2)).astype(int)
    return np.minimum(q, 3)
