"""Command-line experiment runner.

Subcommands::

    o2clusters simulate CONFIG [key=value ...]
    o2clusters sweep    CONFIG [key=value ...]
    o2clusters verify   [kernels|bonds|lemmas|dilute|all] [--perturb EPS]
    o2clusters oracle   [--output PATH]
    o2clusters --dump-config

Configuration files hold one ``key = value`` per line; ``#`` starts a
comment and list values are comma separated.  Overrides on the command
line use the same ``key=value`` form.  The default output directory is
``$O2CLUSTERS_OUTPUT`` or ``./results``.

Exit status: 0 success, 2 invalid configuration or usage, 3 infeasible
bond law, 4 verification failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .bonds import FeasibilityError
from .checks import SUITES, run_suite
from .dynamics import INTERLEAVE, SCHEMES, DynamicsConfig, chain_seed, run_chains, sweep_indices
from .estimators import STANDARD, ObservableSeries, ratio_with_ci, series_csv, summary, summary_json
from .graph import build_box
from .kernels import RHO_FAMILIES, Villain, XYExp, rho_family
from .potts import DilutePottsParams, DPConfig, dp_run, tau_estimator
from .spins import SpinConfig

EXIT_OK, EXIT_CONFIG, EXIT_FEASIBILITY, EXIT_VERIFY = 0, 2, 3, 4
MODELS = ("villain", "xy", "rho", "dilute_potts")
BCS = ("wired", "free", "torus")
ENV_OUTPUT = "O2CLUSTERS_OUTPUT"


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a run.

    ``temperatures`` are Villain times ``t``; the XY and ``exp`` rho
    models use ``beta = 1/(2t)``, and dilute Potts uses them as the chain
    time.  ``site = -1`` picks the box centre; ``other = -1`` picks the
    vertex half a side away along the first axis (dilute Potts only).
    """

    model: str = "villain"
    rho: str = "exp"
    dims: int = 2
    side: int = 8
    bc: str = "wired"
    temperatures: tuple = (1.0,)
    scheme: str = "cluster_swapping"
    interleave: str = "metropolis"
    burn_in: int = 1000
    sweeps_between: int = 1
    n_measurements: int = 10000
    n_chains: int = 1
    workers: int = 1
    seed: int = 0
    site: int = -1
    other: int = -1
    init: str = "aligned"
    boundary_angle: float = 0.0
    proposal_width: float = math.pi / 2
    batches: int = 32
    Q: int = 2
    lam: float = 1.0
    u: float = 1.0
    output_dir: str = ""

    def validate(self) -> "ExperimentConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.model in MODELS, f"model must be one of {MODELS}")
        need(self.rho in RHO_FAMILIES, f"rho must be one of {RHO_FAMILIES}")
        need(self.bc in BCS, f"bc must be one of {BCS}")
        need(self.scheme in SCHEMES, f"scheme must be one of {SCHEMES}")
        need(self.interleave in INTERLEAVE, f"interleave must be one of {INTERLEAVE}")
        need(self.init in ("aligned", "random"), "init must be aligned or random")
        need(len(self.temperatures) > 0, "temperature grid is empty")
        need(all(t > 0 and math.isfinite(t) for t in self.temperatures), "temperatures must be positive")
        need(1 <= self.dims <= 3, "dims must be 1, 2 or 3")
        need(self.side >= 2, "side must be at least 2")
        for name in ("n_measurements", "n_chains", "workers", "sweeps_between", "Q"):
            need(getattr(self, name) >= 1, f"{name} must be positive")
        need(self.burn_in >= 0, "burn_in must be non-negative")
        need(self.batches >= 16, "batches must be at least 16")
        need(self.n_measurements * self.n_chains >= self.batches, "fewer measurements than batches")
        need(self.lam > 0 and self.u > 0, "lam and u must be positive")
        need(self.proposal_width > 0, "proposal_width must be positive")
        n = self.side ** self.dims
        for name in ("site", "other"):
            v = getattr(self, name)
            need(v == -1 or 0 <= v < n, f"{name} must be -1 or a vertex index below {n}")
        return self

    # serialization ----------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ", ".join(repr(float(x)) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_pairs(cls, pairs, base: "ExperimentConfig | None" = None) -> "ExperimentConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        values = {}
        for key, raw in pairs:
            if key not in kinds:
                raise ConfigError(f"unknown key {key!r}")
            values[key] = _convert(key, kinds[key], raw.strip())
        return dataclasses.replace(base or cls(), **values)

    @classmethod
    def from_text(cls, text: str, base=None) -> "ExperimentConfig":
        pairs = []
        for num, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {num}: expected key = value")
            key, raw = line.split("=", 1)
            pairs.append((key.strip(), raw))
        return cls.from_pairs(pairs, base)

    def output_path(self) -> Path:
        return Path(self.output_dir or os.environ.get(ENV_OUTPUT) or "results")


def _convert(key, kind, raw):
    try:
        if kind == "tuple":
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return raw


def parse_overrides(items) -> list:
    pairs = []
    for item in items:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        pairs.append((key.strip(), raw))
    return pairs


def load_config(path, overrides=()) -> ExperimentConfig:
    base = ExperimentConfig()
    if path:
        try:
            base = ExperimentConfig.from_text(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
    return ExperimentConfig.from_pairs(parse_overrides(overrides), base).validate()


# ----------------------------------------------------------------------
# model construction (picklable for worker processes)
# ----------------------------------------------------------------------


def make_weight(cfg: ExperimentConfig, t: float):
    if cfg.model == "villain":
        return Villain(t)
    if cfg.model == "xy":
        return XYExp(1.0 / (2.0 * t))
    if cfg.model == "rho":
        return rho_family(cfg.rho, t)
    raise ConfigError(f"model {cfg.model!r} has no O(2) weight")


@dataclass(frozen=True)
class SpinFactory:
    config: ExperimentConfig
    t: float

    def __call__(self) -> SpinConfig:
        c = self.config
        g = build_box(c.dims, c.side, bc=c.bc)
        rng = np.random.default_rng([c.seed, 7])
        return SpinConfig.new(g, make_weight(c, self.t), c.boundary_angle, init=c.init, rng=rng)


def dynamics_of(cfg: ExperimentConfig) -> DynamicsConfig:
    return DynamicsConfig(
        scheme=cfg.scheme,
        sweeps_between_measurements=cfg.sweeps_between,
        burn_in=cfg.burn_in,
        interleave=cfg.interleave,
        proposal_width=cfg.proposal_width,
    )


def _site(cfg: ExperimentConfig):
    return None if cfg.site < 0 else cfg.site


def run_o2(cfg: ExperimentConfig, temp_idx: int) -> dict:
    t = cfg.temperatures[temp_idx]
    return run_chains(
        SpinFactory(cfg, t), dynamics_of(cfg), STANDARD,
        n_measurements=cfg.n_measurements, seed=cfg.seed, n_chains=cfg.n_chains,
        temp_idx=temp_idx, workers=cfg.workers, site=_site(cfg),
    )


def _dp_sites(cfg: ExperimentConfig, g):
    x = cfg.site if cfg.site >= 0 else (g.n - 1) // 2 if cfg.dims == 1 else g.index(*[cfg.side // 2] * cfg.dims)
    if cfg.other >= 0:
        return x, cfg.other
    coords = np.unravel_index(x, (cfg.side,) * cfg.dims)
    shifted = ((coords[0] + cfg.side // 2) % cfg.side,) + tuple(coords[1:])
    return x, int(np.ravel_multi_index(shifted, (cfg.side,) * cfg.dims))


def _dp_task(task):
    cfg, temp_idx, chain_idx = task
    P = DilutePottsParams(cfg.Q, cfg.lam, cfg.temperatures[temp_idx], cfg.u)
    g = build_box(cfg.dims, cfg.side, bc=cfg.bc)
    rng = np.random.default_rng(chain_seed(cfg.seed, temp_idx, chain_idx))
    x, y = _dp_sites(cfg, g)
    dp = DPConfig.new(g, P, init=1 if cfg.init == "aligned" else "random", rng=rng)
    return dp_run(dp, x, y, cfg.n_measurements, rng, burn_in=cfg.burn_in, sweeps_between=cfg.sweeps_between)


def run_dilute(cfg: ExperimentConfig, temp_idx: int) -> np.ndarray:
    tasks = [(cfg, temp_idx, c) for c in range(cfg.n_chains)]
    if cfg.workers > 1 and cfg.n_chains > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, cfg.n_chains)) as pool:
            rows = list(pool.map(_dp_task, tasks))
    else:
        rows = [_dp_task(t) for t in tasks]
    return np.concatenate(rows)


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _indices(cfg):
    one = sweep_indices(dynamics_of(cfg), cfg.n_measurements)
    return np.tile(one, cfg.n_chains)


def cmd_simulate(cfg: ExperimentConfig, out=None) -> Path:
    """Per-temperature CSV series plus one JSON summary; returns the output directory."""
    out = out or sys.stdout
    root = cfg.output_path()
    _write(root / "config.txt", cfg.to_text())
    results = {}
    for k, t in enumerate(cfg.temperatures):
        if cfg.model == "dilute_potts":
            rows = run_dilute(cfg, k)
            series = {name: ObservableSeries(name, rows[:, j]) for j, name in enumerate(("s_x", "s_y", "connect"))}
            est = tau_estimator(rows, cfg.Q, cfg.batches)
            results[repr(t)] = dataclasses.asdict(est)
            idx = np.tile(np.arange(1, cfg.n_measurements + 1) * cfg.sweeps_between + cfg.burn_in, cfg.n_chains)
        else:
            series = run_o2(cfg, k)
            results[repr(t)] = summary(series, cfg.batches)
            idx = _indices(cfg)
        _write(root / f"series_T{k}.csv", series_csv(series, idx))
        print(f"t={t!r}: done", file=out)
    meta = {"model": cfg.model, "seed": cfg.seed, "config": cfg.to_text()}
    _write(root / "summary.json", summary_json(results, meta))
    print(f"wrote {root}", file=out)
    return root


SWEEP_COLUMNS = ("t",) + tuple(f"{c}{s}" for c in STANDARD[:4] + ("ratio_k1", "ratio_k2") for s in ("", "_err"))


def sweep_rows(cfg: ExperimentConfig) -> list:
    if cfg.model == "dilute_potts":
        raise ConfigError("sweep supports the O(2) models only")
    rows = []
    for k, t in enumerate(cfg.temperatures):
        series = run_o2(cfg, k)
        row = [t]
        for name in STANDARD[:4]:
            e = series[name].estimate(cfg.batches)
            row += [e.mean, e.err]
        for num, den in (("cos1", "connect"), ("cos2", "connect_both")):
            try:
                r = ratio_with_ci(series[num], series[den], cfg.batches)
                row += [r.ratio, r.ratio_err]
            except ZeroDivisionError:
                row += [float("nan"), float("nan")]
        rows.append(row)
    return rows


def cmd_sweep(cfg: ExperimentConfig, out=None) -> Path:
    out = out or sys.stdout
    rows = sweep_rows(cfg)
    text = ",".join(SWEEP_COLUMNS) + "\n" + "".join(",".join(f"{v:.17g}" for v in r) + "\n" for r in rows)
    path = cfg.output_path() / "sweep.csv"
    _write(path, text)
    out.write(text)
    return path


def cmd_verify(suite: str, perturb: float = 0.0, out=None) -> bool:
    out = out or sys.stdout
    names = SUITES if suite == "all" else (suite,)
    ok = True
    for name in names:
        print(f"[{name}]", file=out)
        for check in run_suite(name, perturb=perturb):
            print("  " + check.line(), file=out)
            ok &= check.passed
    print("verify: " + ("PASS" if ok else "FAIL"), file=out)
    return ok


def cmd_oracle(path: Path, out=None) -> Path:
    from .oracle import build_manifest

    out = out or sys.stdout

    man = build_manifest()
    _write(path, man.to_json())
    worst = max(c["error"] for c in man.cases.values())
    print(f"wrote {len(man.cases)} cases to {path}; largest grid-doubling error {worst:.2e}", file=out)
    return path


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="o2clusters", description="Random-cluster simulations of O(2) and dilute Potts models.")
    p.add_argument("--dump-config", action="store_true", help="print the default configuration and exit")
    sub = p.add_subparsers(dest="command")
    for name, text in (("simulate", "run chains and write series and a summary"),
                       ("sweep", "scan temperatures and write sweep.csv")):
        s = sub.add_parser(name, help=text)
        s.add_argument("config", nargs="?", help="key = value configuration file")
        s.add_argument("overrides", nargs="*", help="key=value overrides")
    v = sub.add_parser("verify", help="run deterministic identity suites")
    v.add_argument("suite", nargs="?", default="all", choices=SUITES + ("all",))
    v.add_argument("--perturb", type=float, default=0.0, help="shift bond probabilities (negative control)")
    o = sub.add_parser("oracle", help="regenerate the oracle manifest")
    o.add_argument("--output", type=Path, default=None)
    return p


def _split_config(args):
    # a first positional containing "=" is an override, not a file
    if args.config and "=" in args.config and not Path(args.config).exists():
        return None, [args.config] + args.overrides
    return args.config, args.overrides


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.dump_config:
        sys.stdout.write(ExperimentConfig().to_text())
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "verify":
            return EXIT_OK if cmd_verify(args.suite, args.perturb) else EXIT_VERIFY
        if args.command == "oracle":
            path = args.output or ExperimentConfig().output_path() / "oracle_manifest.json"
            cmd_oracle(path)
            return EXIT_OK
        cfg = load_config(*_split_config(args))
        (cmd_simulate if args.command == "simulate" else cmd_sweep)(cfg)
        return EXIT_OK
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FeasibilityError as exc:
        print(f"infeasible bond law: {exc}", file=sys.stderr)
        return EXIT_FEASIBILITY


if __name__ == "__main__":
    sys.exit(main())
