"""Command-line entry point.

Usage::

    xyorbit COMMAND [--config PATH] [--seed N] [--out DIR] [key=value ...]

The config file holds one ``key=value`` per line; ``#`` starts a comment.
Trailing ``key=value`` arguments override the file, and ``--seed`` /
``--out`` override both. Every run writes ``manifest.json`` echoing the
full config and the tool version.

Exit status: 0 pass, 1 fail, 2 usage or validation error.

Config keys (defaults in brackets):

=================  ===========================================================
dimension          lattice dimension, 1 or 2 [1]
extent             sites per axis, comma separated [3]
alpha              decay exponent, strictly inside (d, 2d) [1.5]
boundary           ``torus`` or ``fixed`` [torus]
radius             exterior truncation radius when boundary=fixed [0]
beta               inverse temperature, >= 0 [0.3]
q                  number of arcs [4]
h                  field magnitude [0]
theta              field angle [0]
sign               coupling sign, +1 ferromagnetic or -1 [1]
M                  Gauss-Legendre order per site [64]
samples            Monte Carlo samples per rate [100000]
replicas           orbit replicas [200]
sweeps             heat-bath sweeps per Monte Carlo rate draw [100]
proposal_sweeps    heat-bath sweeps per proposal in Monte Carlo dynamics [10]
burn_in            initial heat-bath sweeps [100]
seed               root seed [0]
out                output directory [out]
workers            replica threads, 0 = all CPUs [0]
cutoff             lattice-sum cutoff for certify, 0 = default [0]
rate_method        ``quadrature`` or ``monte_carlo`` for rates [quadrature]
states             ``all`` or states such as ``1-1-1;2-1-1`` [all]
sites              ``all`` or comma separated site indices [all]
rate_mode          simulate rate mode [quadrature]
initial            initial state for simulate, empty = all ones []
t_end              simulated time [10]
snapshot_dt        snapshot spacing, 0 = only t=0 [0.1]
speed              field rotation speed, 0 = static field [0]
kernel_rate        heat-bath relabelling rate per site in simulate [0]
eps_fd             finite-difference step for verify-rotation [1e-4]
t_fb               horizon t for verify-forward-backward [0.5]
fb_points          size of the s-grid [6]
fb_variant         ``time_ordered`` or ``frozen`` [time_ordered]
tolerance          pass threshold, 0 = experiment default [0]
=================  ===========================================================

Replica k of a statistical run draws from
``SeedSequence(seed, spawn_key=(k,))``, so its stream does not depend on
how many replicas are run or on ``workers``.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .discretization import dobrushin_certificate, enumerate_states
from .dynamics import FieldSchedule, simulate
from .gibbs import BudgetError, discrete_marginal
from .io import (parse_state, write_json, write_marginal_csv, write_rates_csv,
                 write_series_csv, write_snapshots_csv, write_trajectory_csv)
from .lattice import LatticeSpec, build_coupling_table
from .model import ModelParams
from .rates import rate_mc, rate_quadrature
from . import verify

COMMANDS = ("certify", "marginal", "rates", "simulate", "verify-stationarity",
            "verify-rotation", "verify-forward-backward", "verify-orbit",
            "verify-uniqueness", "verify-perturbation", "verify-irreversibility")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    command: str = "certify"
    dimension: int = 1
    extent: tuple = (3,)
    alpha: float = 1.5
    boundary: str = "torus"
    radius: int = 0
    beta: float = 0.3
    q: int = 4
    h: float = 0.0
    theta: float = 0.0
    sign: float = 1.0
    M: int = 64
    samples: int = 100_000
    replicas: int = 200
    sweeps: int = 100
    proposal_sweeps: int = 10
    burn_in: int = 100
    seed: int = 0
    out: str = "out"
    workers: int = 0
    cutoff: int = 0
    rate_method: str = "quadrature"
    states: str = "all"
    sites: str = "all"
    rate_mode: str = "quadrature"
    initial: str = ""
    t_end: float = 10.0
    snapshot_dt: float = 0.1
    speed: float = 0.0
    kernel_rate: float = 0.0
    eps_fd: float = 1e-4
    t_fb: float = 0.5
    fb_points: int = 6
    fb_variant: str = "time_ordered"
    tolerance: float = 0.0

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["extent"] = list(self.extent)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in d.items():
            if key not in known:
                raise ConfigError(key, "unknown config key")
            kwargs[key] = _coerce(key, known[key].type, value)
        return cls(**kwargs)

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError("command", f"unknown command {self.command!r}")
        for key in ("M", "samples", "replicas", "sweeps", "proposal_sweeps", "burn_in",
                    "fb_points"):
            if getattr(self, key) < 1:
                raise ConfigError(key, "must be >= 1")
        for key in ("t_end", "t_fb"):
            if not getattr(self, key) > 0:
                raise ConfigError(key, "must be > 0")
        if self.beta < 0:
            raise ConfigError("beta", "must be >= 0")
        if self.h < 0:
            raise ConfigError("h", "must be >= 0")
        if self.q < 2:
            raise ConfigError("q", "must be >= 2")
        if self.workers < 0:
            raise ConfigError("workers", "must be >= 0")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigError("seed", "must be a 64-bit unsigned integer")
        choices = dict(rate_method=("quadrature", "monte_carlo"),
                       rate_mode=("quadrature", "monte_carlo"),
                       fb_variant=("time_ordered", "frozen"),
                       boundary=("torus", "fixed"))
        for key, allowed in choices.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(key, f"must be one of {', '.join(allowed)}")


def _coerce(key, typ, value):
    typ = str(typ)
    try:
        if typ == "tuple":
            if isinstance(value, str):
                value = [v for v in value.replace(" ", "").split(",") if v]
            return tuple(int(v) for v in value)
        if typ == "int":
            return int(value)
        if typ == "float":
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, f"cannot parse {value!r} as {typ}") from exc


def parse_config_text(text: str) -> dict:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}", f"expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def build_params(cfg: RunConfig) -> ModelParams:
    spec = LatticeSpec(cfg.dimension, cfg.extent, cfg.alpha, cfg.boundary, cfg.radius)
    return ModelParams(build_coupling_table(spec), cfg.beta, cfg.q, cfg.h, cfg.theta,
                       cfg.sign)


def _tol(cfg, default):
    return cfg.tolerance if cfg.tolerance > 0 else default


def _workers(cfg):
    return cfg.workers or os.cpu_count() or 1


def _report(out: Path, report) -> int:
    write_json(out / "report.json", report.to_dict())
    return 0 if report.passed else 1


def _states(cfg, params):
    if cfg.states == "all":
        return enumerate_states(params.n_sites, params.q)
    return [parse_state(s) for s in cfg.states.split(";") if s.strip()]


def _sites(cfg, params):
    if cfg.sites == "all":
        return list(range(params.n_sites))
    return [int(s) for s in cfg.sites.split(",") if s.strip()]


def run(command: str, cfg: RunConfig) -> int:
    """Run one experiment, write its artifacts under ``cfg.out``, return the exit status."""
    cfg = dataclasses.replace(cfg, command=command)
    cfg.validate()
    params = build_params(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "manifest.json", {"tool": "xyorbit", "version": __version__,
                                       "config": cfg.to_dict()})
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))

    if command == "certify":
        cert = dobrushin_certificate(params, params.couplings.spec, cfg.q, cfg.cutoff or None)
        write_json(out / "certificate.json", cert.to_dict())
        return 0 if cert.passes else 1
    if command == "marginal":
        write_marginal_csv(out / "marginal.csv", discrete_marginal(params, cfg.M), cfg.q)
        return 0
    if command == "rates":
        rows = []
        for st in _states(cfg, params):
            for x in _sites(cfg, params):
                if cfg.rate_method == "quadrature":
                    est = rate_quadrature(st, x, params, cfg.M)
                else:
                    est = rate_mc(st, x, params, cfg.samples, rng, cfg.sweeps)
                rows.append((st, x, est))
        write_rates_csv(out / "rates.csv", rows)
        return 0
    if command == "simulate":
        initial = parse_state(cfg.initial) if cfg.initial else np.ones(params.n_sites, np.int64)
        if len(initial) != params.n_sites:
            raise ConfigError("initial", f"needs {params.n_sites} labels")
        schedule = FieldSchedule(cfg.theta, cfg.speed) if cfg.speed else None
        traj = simulate(initial, cfg.t_end, params, cfg.rate_mode, schedule, rng,
                        sweeps=cfg.proposal_sweeps, burn_in=cfg.burn_in,
                        snapshot_dt=cfg.snapshot_dt or None, kernel_rate=cfg.kernel_rate)
        write_trajectory_csv(out / "trajectory.csv", traj.events)
        write_snapshots_csv(out / "snapshots.csv", traj.snapshot_times, traj.snapshots)
        return 0
    if command == "verify-stationarity":
        return _report(out, verify.stationarity_residual(params, cfg.M, _tol(cfg, 1e-8)))
    if command == "verify-rotation":
        return _report(out, verify.rotation_residual(params, cfg.M, cfg.eps_fd, _tol(cfg, 1e-6)))
    if command == "verify-forward-backward":
        s_grid = np.linspace(0.0, cfg.t_fb, cfg.fb_points)
        rep = verify.forward_backward_constancy(params, cfg.t_fb, s_grid, cfg.M,
                                                _tol(cfg, 1e-5), cfg.fb_variant)
        return _report(out, rep)
    if command == "verify-orbit":
        rep = verify.orbit_tracking(params, cfg.t_end, cfg.replicas, cfg.seed,
                                    speed=cfg.speed or 1.0, sweeps=cfg.proposal_sweeps,
                                    burn_in=cfg.burn_in, snapshot_dt=cfg.snapshot_dt,
                                    workers=_workers(cfg))
        write_series_csv(out / "orbit.csv", {"time": rep.times, "mean_angle": rep.mean_angle})
        write_series_csv(out / "replica_slopes.csv", {"slope": rep.replica_slopes})
        write_json(out / "report.json", rep.to_dict())
        return 0 if rep.passed else 1
    if command == "verify-uniqueness":
        rep = verify.uniqueness_check(params, cfg.M, _tol(cfg, 1e-8))
        write_series_csv(out / "stationary.csv",
                         {"index": np.arange(cfg.q ** params.n_sites),
                          "probability": rep.details.pop("stationary_vector")})
        return _report(out, rep)
    if command == "verify-perturbation":
        return _report(out, verify.reversible_perturbation_check(params, cfg.M,
                                                                 tolerance=_tol(cfg, 1e-8)))
    if command == "verify-irreversibility":
        return _report(out, verify.irreversibility_witness(params, cfg.M,
                                                           tolerance=_tol(cfg, 1e-8)))
    raise ConfigError("command", f"unknown command {command!r}")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="xyorbit", description="Rotation dynamics toolkit.")
    ap.add_argument("command", help=", ".join(COMMANDS))
    ap.add_argument("overrides", nargs="*", metavar="key=value")
    ap.add_argument("--config", type=Path)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out")
    args = ap.parse_args(argv)
    try:
        if args.command not in COMMANDS:
            raise ConfigError("command", f"unknown command {args.command!r}")
        values = parse_config_text(args.config.read_text()) if args.config else {}
        values.update(parse_config_text("\n".join(args.overrides)))
        if args.seed is not None:
            values["seed"] = args.seed
        if args.out is not None:
            values["out"] = args.out
        values.pop("command", None)
        cfg = RunConfig.from_dict(values)
        return run(args.command, cfg)
    except (ConfigError, BudgetError, ValueError, OSError) as exc:
        print(f"xyorbit: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
