"""Observables, connectivity indicators and batch-means estimates."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bonds import bond_clusters, sample_bonds, sample_pair_bonds
from .kernels import ReflectionAxis
from .spins import SpinConfig

DEFAULT_BATCHES = 32
MIN_BATCHES = 16


class InsufficientDataError(ValueError):
    """Too few usable samples for an estimate."""


@dataclass
class ObservableSeries:
    """A time-ordered series of one observable plus run metadata."""

    name: str
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"series {self.name!r} has non-finite values")

    def __len__(self):
        return len(self.values)

    def mean(self) -> float:
        return float(self.values.mean())

    def estimate(self, n_batches=DEFAULT_BATCHES) -> "Estimate":
        return batch_means(self.values, n_batches)


@dataclass(frozen=True)
class Estimate:
    mean: float
    err: float
    n_batches: int

    def to_dict(self):
        return {"estimate": self.mean, "error": self.err, "batches": self.n_batches}


def _batch_matrix(values, n_batches):
    values = np.asarray(values, dtype=float)
    if n_batches < MIN_BATCHES:
        raise ValueError(f"need at least {MIN_BATCHES} batches")
    size = len(values) // n_batches
    if size < 1:
        raise InsufficientDataError(f"{len(values)} samples cannot fill {n_batches} batches")
    # leading samples that do not fill a batch are dropped
    return values[len(values) - size * n_batches :].reshape(n_batches, size)


def batch_means(values, n_batches=DEFAULT_BATCHES) -> Estimate:
    """Mean and batch-means standard error.

    >>> e = batch_means(np.ones(64))
    >>> e.mean, e.err
    (1.0, 0.0)
    """
    means = _batch_matrix(values, n_batches).mean(axis=1)
    err = means.std(ddof=1) / math.sqrt(n_batches)
    return Estimate(float(means.mean()), float(err), n_batches)


@dataclass(frozen=True)
class RatioEstimate:
    num: float
    num_err: float
    den: float
    den_err: float
    ratio: float
    ratio_err: float
    n_batches: int

    def within(self, lo, hi, n_sigma=3.0) -> bool:
        """Whether ``[ratio - n_sigma err, ratio + n_sigma err]`` meets ``(lo, hi]``."""
        return self.ratio + n_sigma * self.ratio_err > lo and self.ratio - n_sigma * self.ratio_err <= hi

    def to_dict(self):
        return {
            "numerator": self.num,
            "numerator_error": self.num_err,
            "denominator": self.den,
            "denominator_error": self.den_err,
            "ratio": self.ratio,
            "ratio_error": self.ratio_err,
            "batches": self.n_batches,
        }


def ratio_with_ci(num, den, n_batches=DEFAULT_BATCHES) -> RatioEstimate:
    """Ratio of paired means with a delta-method error from batch means.

    The batch covariance of numerator and denominator enters the error, so
    positively correlated pairs get a tighter interval.
    """
    a = num.values if isinstance(num, ObservableSeries) else np.asarray(num, dtype=float)
    b = den.values if isinstance(den, ObservableSeries) else np.asarray(den, dtype=float)
    if a.shape != b.shape:
        raise ValueError("numerator and denominator must be paired samples")
    ma = _batch_matrix(a, n_batches).mean(axis=1)
    mb = _batch_matrix(b, n_batches).mean(axis=1)
    xa, xb = ma.mean(), mb.mean()
    cov = np.cov(ma, mb, ddof=1) / n_batches
    ea, eb = math.sqrt(cov[0, 0]), math.sqrt(cov[1, 1])
    if abs(xb) <= 2 * eb or xb == 0:
        raise ZeroDivisionError(f"denominator {xb:.3g} +- {eb:.3g} is consistent with zero")
    r = xa / xb
    var = (cov[0, 0] - 2 * r * cov[0, 1] + r * r * cov[1, 1]) / (xb * xb)
    return RatioEstimate(float(xa), ea, float(xb), eb, float(r), math.sqrt(max(var, 0.0)), n_batches)


def bootstrap_ratio(num, den, n_resamples=10_000, rng=None, n_batches=DEFAULT_BATCHES):
    """Bootstrap standard error of the ratio of batch means (a test oracle)."""
    rng = np.random.default_rng(rng)
    ma = _batch_matrix(num, n_batches).mean(axis=1)
    mb = _batch_matrix(den, n_batches).mean(axis=1)
    idx = rng.integers(0, n_batches, size=(n_resamples, n_batches))
    ratios = ma[idx].mean(axis=1) / mb[idx].mean(axis=1)
    return float(ratios.std(ddof=1))


# ----------------------------------------------------------------------
# single-configuration observables
# ----------------------------------------------------------------------


def measure_cos_k(cfg: SpinConfig, x: int, k: int, reference: float = 0.0) -> float:
    if k not in (1, 2):
        raise ValueError("k must be 1 or 2")
    return math.cos(k * (cfg.theta[x] - reference))


def measure_connect_boundary(cfg: SpinConfig, bonds, x: int) -> int:
    """1 when the cluster of ``x`` meets the boundary."""
    return int(bond_clusters(cfg, bonds).touches_boundary(x))


def measure_connect_both(cfg: SpinConfig, pair_bonds, x: int) -> int:
    """1 when ``x`` reaches the boundary in both bond families."""
    e1, e2 = pair_bonds
    return int(bond_clusters(cfg, e1).touches_boundary(x) and bond_clusters(cfg, e2).touches_boundary(x))


def two_point_connect(cfg: SpinConfig, x: int, y: int, rng, bonds=None) -> int:
    """Indicator of ``x <-> y`` for bonds whose axis is rotated to ``theta_y``.

    The reflection fixes ``+-i e^{i theta_y}``, which is the single-axis law
    for free or periodic graphs after a global rotation taking ``u_y`` to 1.
    """
    if x == y:
        return 1
    if bonds is None:
        bonds = sample_bonds(cfg, ReflectionAxis(float(cfg.theta[y]) + math.pi / 2), rng)
    return int(bond_clusters(cfg, bonds).connected(x, y))


def standard_observables(cfg: SpinConfig, x: int, rng, reference: float = 0.0) -> dict:
    """All standard observables at ``x`` from one fresh draw of each bond family.

    Angles are measured from ``reference`` (the boundary angle); the single
    bonds use the axis through ``+-i e^{i reference}``.  Random numbers: one
    per edge for the single bonds, then one per edge for the pair bonds.
    """
    rot = cfg.with_theta(cfg.theta - reference)
    bonds = sample_bonds(rot, ReflectionAxis(math.pi / 2), rng)
    pair = sample_pair_bonds(rot, rng)
    c1 = measure_cos_k(rot, x, 1)
    c2 = measure_cos_k(rot, x, 2)
    conn = measure_connect_boundary(rot, bonds, x)
    both = measure_connect_both(rot, pair, x)
    return {
        "cos1": c1,
        "cos2": c2,
        "connect": conn,
        "connect_both": both,
        "cos1_disconnected": c1 * (1 - conn),
        "cos2_not_both": c2 * (1 - both),
    }


STANDARD = ("cos1", "cos2", "connect", "connect_both", "cos1_disconnected", "cos2_not_both")


def summary(series: dict, n_batches=DEFAULT_BATCHES) -> dict:
    """JSON-ready estimates for each series plus the two bound ratios when present."""
    out = {name: s.estimate(n_batches).to_dict() for name, s in series.items()}
    for label, num, den in (("ratio_k1", "cos1", "connect"), ("ratio_k2", "cos2", "connect_both")):
        if num in series and den in series:
            try:
                out[label] = ratio_with_ci(series[num], series[den], n_batches).to_dict()
            except ZeroDivisionError as exc:
                out[label] = {"error": str(exc)}
    return out


def series_csv(series: dict, sweep_index) -> str:
    """Long-format CSV ``sweep_index,observable,value`` with 17 significant digits."""
    lines = ["sweep_index,observable,value"]
    for name, s in series.items():
        lines += [f"{i},{name},{v:.17g}" for i, v in zip(sweep_index, s.values.tolist())]
    return "\n".join(lines) + "\n"


def summary_json(summary_dict: dict, metadata: dict | None = None) -> str:
    return json.dumps({"metadata": metadata or {}, "estimates": summary_dict}, indent=2, sort_keys=True) + "\n"
