"""Desk-scale checks of the rotation and stationarity identities.

Deterministic experiments work on the explicit generator of a tiny system
and the quadrature law of its arc labels. The statistical experiment
(``orbit_tracking``) simulates a larger ring with a rotating field.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.stats

from .discretization import arc_midpoints, discretize, enumerate_states, state_index
from .dynamics import (FieldSchedule, GeneratorMatrix, build_generator_matrix,
                       build_kernel_matrix, is_strongly_connected, simulate,
                       stationary_distribution, time_ordered_propagator,
                       transient_distribution)
from .gibbs import ConstraintMask, discrete_marginal, sample_constrained_gibbs
from .model import TWO_PI, ModelParams, wrap_angle


@dataclass
class ResidualReport:
    experiment: str
    residuals: dict
    tolerance: float
    provenance: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values()) if self.residuals else 0.0

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tolerance and self.details.get("checks_ok", True)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["max_residual"] = self.max_residual
        out["pass"] = self.passed
        return out


def _provenance(params: ModelParams, **extra) -> dict:
    spec = params.couplings.spec
    out = dict(dimension=spec.dimension, extent=list(spec.extent), alpha=spec.alpha,
               boundary=spec.boundary, beta=params.beta, q=params.q, h=params.h,
               theta=params.theta, sign=params.sign)
    out.update(extra)
    return out


def indicator_matrix(q: int, n: int) -> tuple[np.ndarray, list[str]]:
    """Columns are the indicators 1{label_x = k} over all states."""
    states = enumerate_states(n, q)
    cols, names = [], []
    for x in range(n):
        for k in range(1, q + 1):
            cols.append((states[:, x] == k).astype(float))
            names.append(f"site{x}_label{k}")
    return np.column_stack(cols), names


def _per_indicator(values: np.ndarray, names: list[str]) -> dict:
    return {n: float(abs(v)) for n, v in zip(names, values)}


def stationarity_residual(params: ModelParams, M: int = 64, tolerance: float = 1e-8
                          ) -> ResidualReport:
    """|mu'(L f)| for every single-site indicator f, at zero field."""
    if params.h != 0 or np.any(params.couplings.exterior != 0):
        raise ValueError("stationarity_residual needs zero field (h=0, torus)")
    mu = discrete_marginal(params, M).reshape(-1)
    G = build_generator_matrix(params, M)
    F, names = indicator_matrix(params.q, params.n_sites)
    r = (mu @ G.matrix) @ F
    return ResidualReport("stationarity", _per_indicator(r, names), tolerance,
                          _provenance(params, M=M))


def _rotation_terms(params: ModelParams, M: int, eps: float, F: np.ndarray):
    plus = discrete_marginal(params.with_theta(params.theta + eps), M).reshape(-1)
    minus = discrete_marginal(params.with_theta(params.theta - eps), M).reshape(-1)
    return (plus - minus) @ F / (2.0 * eps)


def rotation_residual(params: ModelParams, M: int = 64, eps_fd: float = 1e-4,
                      tolerance: float = 1e-6,
                      order_eps=(1e-3, 5e-4, 2.5e-4)) -> ResidualReport:
    """Central-difference d/dtheta mu'_theta(f) against mu'_theta(L_theta f).

    Also estimates the observed convergence order of the residual over the
    step sizes ``order_eps``.
    """
    if not 1e-6 <= eps_fd <= 1e-2:
        raise ValueError(f"eps_fd must lie in [1e-6, 1e-2], got {eps_fd}")
    F, names = indicator_matrix(params.q, params.n_sites)
    mu = discrete_marginal(params, M).reshape(-1)
    G = build_generator_matrix(params, M)
    rhs = (mu @ G.matrix) @ F
    lhs = _rotation_terms(params, M, eps_fd, F)
    residuals = _per_indicator(lhs - rhs, names)
    details = {"eps_fd": eps_fd}
    if params.h > 0 and order_eps:
        errs = [float(np.max(np.abs(_rotation_terms(params, M, e, F) - rhs)))
                for e in order_eps]
        orders = [math.log(errs[i] / errs[i + 1]) / math.log(order_eps[i] / order_eps[i + 1])
                  for i in range(len(errs) - 1)]
        details.update(order_eps=list(order_eps), order_residuals=errs, observed_orders=orders,
                       checks_ok=all(abs(o - 2.0) <= 0.4 for o in orders))
    return ResidualReport("rotation", residuals, tolerance, _provenance(params, M=M), details)


def forward_backward_constancy(params: ModelParams, t: float = 0.5, s_grid=None, M: int = 64,
                               tolerance: float = 1e-5, variant: str = "time_ordered",
                               step: float = 0.025) -> ResidualReport:
    """max_s |F(s) - F(0)| with F(s) = mu'_{theta+s} P(s, t) f.

    ``variant="time_ordered"`` takes P(s, t) as the propagator of the
    generator whose field angle rotates with time over [s, t]; F is then
    exactly constant. ``variant="frozen"`` uses exp((t - s) L_{theta+s})
    and is kept as a diagnostic; it drifts at second order in t.
    """
    s_grid = np.linspace(0.0, t, 6) if s_grid is None else np.asarray(s_grid, float)
    if np.any(s_grid < 0) or np.any(s_grid > t):
        raise ValueError("s_grid must lie in [0, t]")
    F, names = indicator_matrix(params.q, params.n_sites)
    theta = params.theta
    cache: dict = {}

    def gen(u):
        key = float(u)
        if key not in cache:
            cache[key] = build_generator_matrix(params.with_theta(theta + u), M).matrix
        return cache[key]

    values = []
    if variant == "time_ordered":
        grid = np.unique(np.concatenate([s_grid, [t]]))
        props = {t: np.eye(params.q ** params.n_sites)}
        P = props[t]
        for a, b in zip(grid[-2::-1], grid[:0:-1]):
            steps = max(1, math.ceil((b - a) / step))
            P = time_ordered_propagator(gen, a, b, steps) @ P
            props[a] = P
        for s in s_grid:
            mu = discrete_marginal(params.with_theta(theta + s), M).reshape(-1)
            values.append(mu @ props[s] @ F)
    elif variant == "frozen":
        G0 = None
        for s in s_grid:
            p = params.with_theta(theta + s)
            mu = discrete_marginal(p, M).reshape(-1)
            G0 = GeneratorMatrix(gen(s), params.q, params.n_sites)
            values.append(transient_distribution(G0, mu, t - s) @ F)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    values = np.array(values)
    dev = np.max(np.abs(values - values[0]), axis=0)
    return ResidualReport(f"forward_backward_{variant}", _per_indicator(dev, names), tolerance,
                          _provenance(params, M=M, t=t, s_grid=s_grid.tolist(), step=step),
                          {"F": values.tolist()})


def magnetisation_angle(labels: np.ndarray, q: int) -> np.ndarray:
    """arg sum_x exp(i midpoint(label_x)) along the last axis."""
    mid = arc_midpoints(labels, q)
    return np.angle(np.exp(1j * mid).sum(axis=-1))


def replica_rng(seed: int, k: int) -> np.random.Generator:
    """Stream of replica k: independent of how many replicas are run."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))


def _orbit_replica(k, params, seed, t_end, schedule, sweeps, burn_in, snapshot_dt, M):
    rng = replica_rng(seed, k)
    p0 = params.with_theta(schedule.theta0)
    free = ConstraintMask.free(params.n_sites, params.q)
    phi = sample_constrained_gibbs(free, p0, burn_in, rng)
    labels = discretize(phi, params.q)
    traj = simulate(labels, t_end, params, "monte_carlo", schedule, rng, M=M, sweeps=sweeps,
                    initial_phi=phi, snapshot_dt=snapshot_dt)
    return traj.snapshot_times, magnetisation_angle(traj.snapshots, params.q), traj.proposals


@dataclass
class OrbitReport:
    slope: float
    stderr: float
    replicas: int
    times: np.ndarray
    mean_angle: np.ndarray
    replica_slopes: np.ndarray
    phase_start: np.ndarray
    phase_end: np.ndarray
    ks_statistic: float
    ks_pvalue: float
    slope_range: tuple = (0.95, 1.05)
    alpha_level: float = 0.01
    provenance: dict = field(default_factory=dict)

    @property
    def slope_ok(self) -> bool:
        return self.slope_range[0] <= self.slope <= self.slope_range[1]

    @property
    def return_ok(self) -> bool:
        return self.ks_pvalue >= self.alpha_level

    @property
    def passed(self) -> bool:
        return self.slope_ok and self.return_ok

    def to_dict(self) -> dict:
        return dict(experiment="orbit_tracking", slope=self.slope, stderr=self.stderr,
                    replicas=self.replicas, ks_statistic=self.ks_statistic,
                    ks_pvalue=self.ks_pvalue, slope_range=list(self.slope_range),
                    alpha_level=self.alpha_level, slope_ok=self.slope_ok,
                    return_ok=self.return_ok, provenance=self.provenance,
                    **{"pass": self.passed})


def orbit_tracking(params: ModelParams, t_end: float = TWO_PI, replicas: int = 200,
                   seed: int = 0, *, speed: float = 1.0, sweeps: int = 10,
                   burn_in: int = 200, snapshot_dt: float = 0.05, M: int = 32,
                   workers: int | None = None, slope_range=(0.95, 1.05)) -> OrbitReport:
    """Drift of the magnetisation angle under the field theta(t) = theta + speed t.

    Each replica starts from a free Gibbs draw at the initial field angle,
    whose labels and continuous spins are jointly consistent, then runs the
    Monte Carlo rate mode. The slope is the least-squares slope of the mean
    unwrapped angle; its standard error comes from the per-replica slopes.
    The period return compares the wrapped angle at t = 0 and t = t_end by a
    two-sample Kolmogorov-Smirnov test.
    """
    if replicas < 100:
        raise ValueError(f"replicas must be >= 100, got {replicas}")
    schedule = FieldSchedule(params.theta, speed)
    workers = workers or os.cpu_count() or 1

    def job(k):
        return _orbit_replica(k, params, seed, t_end, schedule, sweeps, burn_in,
                              snapshot_dt, M)

    if workers == 1:
        results = [job(k) for k in range(replicas)]
    else:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(job, range(replicas)))
    times = results[0][0]
    psi = np.unwrap(np.array([r[1] for r in results]), axis=1)
    tc = times - times.mean()
    slopes = (psi - psi.mean(axis=1, keepdims=True)) @ tc / (tc @ tc)
    mean_psi = psi.mean(axis=0)
    slope = float((mean_psi - mean_psi.mean()) @ tc / (tc @ tc))
    stderr = float(slopes.std(ddof=1) / math.sqrt(replicas))
    rel = lambda a: wrap_angle(a - params.theta + math.pi) - math.pi
    start, end = rel(psi[:, 0]), rel(psi[:, -1])
    ks = scipy.stats.ks_2samp(start, end)
    return OrbitReport(slope, stderr, replicas, times, mean_psi, slopes, start, end,
                       float(ks.statistic), float(ks.pvalue), tuple(slope_range),
                       provenance=_provenance(params, t_end=t_end, seed=seed, speed=speed,
                                              sweeps=sweeps, burn_in=burn_in,
                                              snapshot_dt=snapshot_dt, M=M,
                                              proposals=int(sum(r[2] for r in results))))


def uniqueness_check(params: ModelParams, M: int = 64, tolerance: float = 1e-8,
                     gap_floor: float = 1e-6) -> ResidualReport:
    """Strong connectivity, a one-dimensional stationary null space, and
    (at zero field) agreement of the stationary vector with the label law."""
    G = build_generator_matrix(params, M)
    connected = is_strongly_connected(G)
    sv = np.linalg.svd(G.matrix.T, compute_uv=False)
    second = float(sv[-2]) if len(sv) > 1 else math.inf
    pi = stationary_distribution(G)
    symmetric = params.h == 0 and not np.any(params.couplings.exterior != 0)
    residuals = {}
    if symmetric:
        mu = discrete_marginal(params, M).reshape(-1)
        residuals["tv_to_marginal"] = 0.5 * float(np.abs(pi - mu).sum())
    residuals["stationary_equation"] = float(np.abs(pi @ G.matrix).max())
    details = dict(strongly_connected=connected, smallest_singular_values=sv[-2:].tolist(),
                   second_smallest_singular_value=second,
                   checks_ok=bool(connected and second > gap_floor),
                   stationary_vector=pi.tolist())
    return ResidualReport("uniqueness", residuals, tolerance, _provenance(params, M=M), details)


def reversible_perturbation_check(params: ModelParams, M: int = 64, kappa: float = 1.0,
                                  balance_tol: float = 1e-10,
                                  tolerance: float = 1e-8) -> ResidualReport:
    """Detailed balance of the heat-bath kernel and the stationary vector of
    rotation plus kernel."""
    mu = discrete_marginal(params, M).reshape(-1)
    K = build_kernel_matrix(params, M, kappa)
    flow = mu[:, None] * K.matrix
    np.fill_diagonal(flow, 0.0)
    balance = float(np.abs(flow - flow.T).max())
    pi = stationary_distribution(build_generator_matrix(params, M) + K)
    tv = 0.5 * float(np.abs(pi - mu).sum())
    return ResidualReport("reversible_perturbation", {"tv_to_marginal": tv}, tolerance,
                          _provenance(params, M=M, kappa=kappa),
                          dict(detailed_balance=balance, balance_tol=balance_tol,
                               checks_ok=balance <= balance_tol))


def kolmogorov_cycle(G: GeneratorMatrix, cycle) -> tuple[float, float]:
    """Products of forward and backward rates around a closed cycle of states."""
    idx = [state_index(s, G.q) for s in cycle]
    fwd = bwd = 1.0
    for a, b in zip(idx, idx[1:] + idx[:1]):
        fwd *= G.matrix[a, b]
        bwd *= G.matrix[b, a]
    return float(fwd), float(bwd)


def irreversibility_witness(params: ModelParams, M: int = 64, kappa: float = 1.0,
                            tolerance: float = 1e-8) -> ResidualReport:
    """Kolmogorov criterion on (1,..)->(2,..)->(3,..)->(1,..) at site 0.

    The generator is rotation plus heat-bath relabelling, so every edge of
    the cycle has a positive rate in both directions. Because the kernel
    alone is reversible, its share of the two products cancels and the gap
    is carried by the rotation rates. The report passes when the gap exceeds
    ``tolerance``.
    """
    if params.q < 3:
        raise ValueError("the witness cycle needs q >= 3")
    G = build_generator_matrix(params, M) + build_kernel_matrix(params, M, kappa)
    base = np.ones(params.n_sites, np.int64)
    cycle = []
    for k in (1, 2, 3):
        s = base.copy()
        s[0] = k
        cycle.append(s)
    fwd, bwd = kolmogorov_cycle(G, cycle)
    gap = abs(fwd - bwd)
    return ResidualReport("irreversibility", {}, tolerance,
                          _provenance(params, M=M, kappa=kappa),
                          dict(cycle=[c.tolist() for c in cycle], forward=fwd, backward=bwd,
                               gap=gap, checks_ok=gap > tolerance))
