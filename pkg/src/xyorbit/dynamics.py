"""Continuous-time rotation dynamics on arc labels.

Two views of the same process:

* ``GeneratorMatrix``: the explicit generator on all q^N label
  configurations of a tiny system, used as the exact oracle.
* ``simulate``: exact thinning. Proposals arrive at the summed per-site
  envelope rate and are accepted with probability rate / envelope.

In ``monte_carlo`` mode the rate is never computed. The acceptance test
uses one draw of the continuous spins from the Gibbs measure constrained to
the current arcs. The pointwise exit ratio at that draw has the rate as its
expectation, so the acceptance probability is exact whenever the draw is.
The draw is produced by warm-started heat-bath sweeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
import scipy.linalg
from scipy.sparse.csgraph import connected_components

from . import _kernels
from .discretization import discretize, enumerate_states, state_index
from .gibbs import (ConstraintMask, check_state_budget, composite_rule, label_table,
                    masked_couplings, quadrature_measure, sample_constrained_gibbs)
from .model import TWO_PI, ModelParams, wrap_angle
from .rates import rate_envelope, rate_quadrature


@dataclass(frozen=True)
class FieldSchedule:
    """Field angle theta(t) = theta0 + speed * t (mod 2pi)."""

    theta0: float = 0.0
    speed: float = 1.0

    def __call__(self, t):
        return wrap_angle(self.theta0 + self.speed * np.asarray(t, dtype=float))


@dataclass(frozen=True)
class TrajectoryEvent:
    time: float
    site: int
    old_label: int
    new_label: int
    kind: str = "rotation"


@dataclass
class Trajectory:
    events: list
    snapshot_times: np.ndarray
    snapshots: np.ndarray
    initial: np.ndarray
    final: np.ndarray
    t_end: float
    proposals: int = 0

    def occupancy(self, q: int, t_start: float = 0.0) -> np.ndarray:
        """Fraction of [t_start, t_end] spent in each label configuration."""
        n = len(self.initial)
        occ = np.zeros(q ** n)
        state = self.initial.copy()
        t_prev = 0.0
        for ev in self.events:
            if ev.time > t_start:
                occ[state_index(state, q)] += ev.time - max(t_prev, t_start)
            state[ev.site] = ev.new_label
            t_prev = ev.time
        occ[state_index(state, q)] += self.t_end - max(t_prev, t_start)
        return occ / (self.t_end - t_start)


# --- generator matrices ----------------------------------------------------

@dataclass(frozen=True)
class GeneratorMatrix:
    """Dense generator on label configurations; row = from-state."""

    matrix: np.ndarray
    q: int
    n_sites: int

    @property
    def states(self) -> np.ndarray:
        return enumerate_states(self.n_sites, self.q)

    def __add__(self, other: "GeneratorMatrix") -> "GeneratorMatrix":
        return GeneratorMatrix(self.matrix + other.matrix, self.q, self.n_sites)

    def scaled(self, factor: float) -> "GeneratorMatrix":
        return GeneratorMatrix(factor * self.matrix, self.q, self.n_sites)

    def rate(self, state, x: int) -> float:
        """Rotation rate at site ``x`` (label + 1)."""
        i = state_index(state, self.q)
        target = np.array(state)
        target[x] = target[x] % self.q + 1
        return float(self.matrix[i, state_index(target, self.q)])


def _from_rates(rates: np.ndarray, q: int, n: int) -> GeneratorMatrix:
    """rates[i, x] is the rate of state i rotating site x."""
    states = enumerate_states(n, q)
    S = len(states)
    G = np.zeros((S, S))
    shape = (q,) * n
    for x in range(n):
        target = states - 1
        target[:, x] = (target[:, x] + 1) % q
        j = np.ravel_multi_index(tuple(target.T), shape)
        G[np.arange(S), j] += rates[:, x]
    G[np.diag_indices(S)] = -G.sum(axis=1)
    return GeneratorMatrix(G, q, n)


def rotation_rates(params: ModelParams, M: int = 64, max_states: int = 4096) -> np.ndarray:
    """All rates as flux / occupation, shape (q^N, N).

    The flux through the right endpoint of site x's arc is the Gibbs weight
    of the other sites' boxes with x pinned to that endpoint.
    """
    check_state_budget(params, max_states)
    q, n = params.q, params.n_sites
    comp = composite_rule(q, M)
    box = label_table([comp] * n, params).reshape(-1)
    ends = (TWO_PI * np.arange(1, q + 1) / q).reshape(q, 1)
    rates = np.empty((q ** n, n))
    for x in range(n):
        rules = [comp] * n
        rules[x] = (ends, np.ones((q, 1)))
        rates[:, x] = label_table(rules, params).reshape(-1) / box
    return rates


def build_generator_matrix(params: ModelParams, M: int = 64,
                           max_states: int = 4096) -> GeneratorMatrix:
    return _from_rates(rotation_rates(params, M, max_states), params.q, params.n_sites)


def heat_bath_conditional(state, x: int, params: ModelParams, M: int = 64) -> np.ndarray:
    """Conditional law of the label at x given the others, by quadrature of
    the arc integrals of exp(-H_x) against the constrained measure of x^c."""
    q = params.q
    mask = ConstraintMask.from_state(state, q, exclude=[x])
    nu = quadrature_measure(mask, params, M)
    nodes, weights = composite_rule(q, M)
    Jx = params.signed_J[x]
    hx = params.field[x]
    beta, theta = params.beta, params.theta
    shift = beta * (params.couplings.row_sums[x] + hx)

    def arc_integrals(mesh):
        a = beta * hx * math.cos(theta)
        b = beta * hx * math.sin(theta)
        for i, s in enumerate(nu.sites):
            a = a + beta * Jx[s] * np.cos(mesh[i])
            b = b + beta * Jx[s] * np.sin(mesh[i])
        a = np.asarray(a)[..., None, None]
        b = np.asarray(b)[..., None, None]
        return np.sum(weights * np.exp(a * np.cos(nodes) + b * np.sin(nodes) - shift), axis=-1)

    ints = arc_integrals(nu.grid.mesh())
    ints = np.broadcast_to(ints, nu.weights.shape + (q,))
    vals = np.tensordot(nu.weights, ints, axes=nu.weights.ndim)
    return vals / vals.sum()


def build_kernel_matrix(params: ModelParams, M: int = 64, kappa: float = 1.0,
                        max_states: int = 4096) -> GeneratorMatrix:
    """Generator of single-site heat-bath resampling at total rate kappa per site."""
    check_state_budget(params, max_states)
    q, n = params.q, params.n_sites
    states = enumerate_states(n, q)
    S = len(states)
    G = np.zeros((S, S))
    for i, st in enumerate(states):
        for x in range(n):
            cond = heat_bath_conditional(st, x, params, M)
            for k in range(1, q + 1):
                if k == st[x]:
                    continue
                tgt = st.copy()
                tgt[x] = k
                G[i, state_index(tgt, q)] += kappa * cond[k - 1]
    G[np.diag_indices(S)] = -G.sum(axis=1)
    return GeneratorMatrix(G, q, n)


def reversible_kernel_step(state, x: int, params: ModelParams, M: int,
                           rng: np.random.Generator) -> np.ndarray:
    """Resample the label at x from its conditional law given the others."""
    cond = heat_bath_conditional(state, x, params, M)
    out = np.array(state)
    out[x] = rng.choice(params.q, p=cond) + 1
    return out


def stationary_distribution(G: GeneratorMatrix) -> np.ndarray:
    S = G.matrix.shape[0]
    A = np.vstack([G.matrix.T, np.ones((1, S))])
    rhs = np.zeros(S + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    return pi


def is_strongly_connected(G: GeneratorMatrix) -> bool:
    adj = (G.matrix > 0).astype(int)
    np.fill_diagonal(adj, 0)
    n, _ = connected_components(adj, directed=True, connection="strong")
    return n == 1


def transient_distribution(G: GeneratorMatrix, p0, t: float) -> np.ndarray:
    """p0 exp(tG) by Pade scaling-and-squaring."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    p0 = np.asarray(p0, dtype=float)
    if t == 0:
        return p0.copy()
    p = p0 @ scipy.linalg.expm(t * G.matrix)
    p = np.where(p < 0, np.where(p >= -1e-12, 0.0, p), p)
    return p / p.sum()


_GAUSS2 = (0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6)


def time_ordered_propagator(generator_at, t0: float, t1: float, steps: int) -> np.ndarray:
    """Propagator P(t0, t1) of dp/dt = p A(t) by fourth-order Magnus steps.

    ``generator_at(t)`` returns the generator matrix in force at time t.
    """
    if t1 < t0:
        raise ValueError("t1 must be >= t0")
    P = None
    if t1 == t0:
        return np.eye(generator_at(t0).shape[0])
    h = (t1 - t0) / steps
    for k in range(steps):
        a = t0 + k * h
        A1 = generator_at(a + _GAUSS2[0] * h)
        A2 = generator_at(a + _GAUSS2[1] * h)
        omega = 0.5 * h * (A1 + A2) + (math.sqrt(3) / 12) * h * h * (A1 @ A2 - A2 @ A1)
        E = scipy.linalg.expm(omega)
        P = E if P is None else P @ E
    return P


# --- simulation ------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _simulate_mc(labels, phi, J, hx, beta, theta0, speed, q, t_end, bound, sweeps,
                 gl_nodes, gl_weights, rng, max_tries, snap_dt, n_snap, max_events):
    n = labels.shape[0]
    width = TWO_PI / q
    lo = np.empty((1, n))
    wd = np.full((1, n), width)
    for y in range(n):
        lo[0, y] = width * (labels[y] - 1)
    order = np.arange(n)
    cum = np.cumsum(bound)
    total = cum[-1]
    ev_time = np.empty(max_events)
    ev_site = np.empty(max_events, np.int64)
    ev_old = np.empty(max_events, np.int64)
    snaps = np.empty((n_snap, n), np.int64)
    n_ev = 0
    k_snap = 0
    proposals = 0
    t = 0.0
    status = 0
    while True:
        t += rng.exponential(1.0 / total)
        while k_snap < n_snap and k_snap * snap_dt <= min(t, t_end):
            snaps[k_snap] = labels
            k_snap += 1
        if t > t_end:
            break
        proposals += 1
        uu = rng.random() * total
        x = 0
        while cum[x] <= uu and x < n - 1:
            x += 1
        theta = theta0 + speed * t
        fails = _kernels.heatbath_sweeps(phi, J, hx, beta, theta, lo, wd, order,
                                         sweeps, rng, max_tries)
        if fails > 0:
            status = 2
            break
        g = _kernels.exit_ratio(phi[0], J, hx, beta, theta, x, lo[0, x], width,
                                gl_nodes, gl_weights)
        acc = g / bound[x]
        if acc > 1.0 + 1e-12:
            status = 1
            break
        if rng.random() < acc:
            if n_ev >= max_events:
                status = 3
                break
            ev_time[n_ev] = t
            ev_site[n_ev] = x
            ev_old[n_ev] = labels[x]
            n_ev += 1
            labels[x] = labels[x] % q + 1
            lo[0, x] = width * (labels[x] - 1)
            p = phi[0, x] + width
            if p >= TWO_PI:
                p -= TWO_PI
            phi[0, x] = p
    return ev_time[:n_ev], ev_site[:n_ev], ev_old[:n_ev], snaps[:k_snap], proposals, status


class BoundViolation(RuntimeError):
    """An acceptance probability exceeded one: the envelope is not dominating."""


def _snapshot_grid(t_end: float, snapshot_dt: float | None):
    if snapshot_dt is None or snapshot_dt <= 0:
        return np.zeros(1), 1.0
    n = int(math.floor(t_end / snapshot_dt + 1e-9)) + 1
    return snapshot_dt * np.arange(n), snapshot_dt


def simulate(initial, t_end: float, params: ModelParams, rate_mode: str = "quadrature",
             field_schedule: FieldSchedule | None = None,
             rng: np.random.Generator | None = None, *, M: int = 32, sweeps: int = 10,
             initial_phi=None, burn_in: int = 100, snapshot_dt: float | None = None,
             kernel_rate: float = 0.0, kernel_M: int = 32,
             generator: GeneratorMatrix | None = None) -> Trajectory:
    """Simulate the rotation dynamics on [0, t_end] by thinning.

    ``rate_mode`` is ``"quadrature"`` (exact rates of tiny systems, optionally
    cached) or ``"monte_carlo"`` (one constrained-Gibbs draw per proposal,
    refreshed by ``sweeps`` heat-bath sweeps). With ``field_schedule`` the
    field angle follows theta(t) at the proposal time. ``kernel_rate`` adds
    heat-bath relabelling at that rate per site (quadrature mode only).
    A precomputed rotation ``generator`` may replace the quadrature rates
    when the field is static.
    """
    if t_end <= 0:
        raise ValueError(f"t_end must be > 0, got {t_end}")
    rng = np.random.default_rng() if rng is None else rng
    labels = np.array(initial, dtype=np.int64)
    q, n = params.q, params.n_sites
    bound = rate_envelope(params)
    times, dt = _snapshot_grid(t_end, snapshot_dt)
    if rate_mode == "monte_carlo":
        if kernel_rate:
            raise ValueError("kernel_rate is only supported in quadrature mode")
        return _simulate_mc_driver(labels, t_end, params, field_schedule, rng, bound,
                                   sweeps, M, initial_phi, burn_in, times, dt)
    if rate_mode != "quadrature":
        raise ValueError(f"unknown rate_mode {rate_mode!r}")

    cache: dict = {}

    def rate(state, x, theta):
        if generator is not None and field_schedule is None:
            return generator.rate(state, x)
        if field_schedule is None:
            key = (tuple(state), x)
            if key not in cache:
                cache[key] = rate_quadrature(state, x, params, M).value
            return cache[key]
        return rate_quadrature(state, x, params.with_theta(float(theta)), M).value

    kcache: dict = {}

    def kernel_cond(state, x, theta):
        if field_schedule is None:
            key = (tuple(state), x)
            if key not in kcache:
                kcache[key] = heat_bath_conditional(state, x, params, kernel_M)
            return kcache[key]
        return heat_bath_conditional(state, x, params.with_theta(float(theta)), kernel_M)

    cum_bound = np.cumsum(bound)
    rot_total = cum_bound[-1]
    total = rot_total + kernel_rate * n
    start = labels.copy()
    events = []
    snaps = np.empty((len(times), n), np.int64)
    k_snap = 0
    t = 0.0
    proposals = 0
    while True:
        t += rng.exponential(1.0 / total)
        while k_snap < len(times) and times[k_snap] <= min(t, t_end):
            snaps[k_snap] = labels
            k_snap += 1
        if t > t_end:
            break
        proposals += 1
        theta = params.theta if field_schedule is None else field_schedule(t)
        u = rng.random() * total
        if u < rot_total:
            x = min(int(np.searchsorted(cum_bound, u, side="right")), n - 1)
            acc = rate(labels, x, theta) / bound[x]
            if acc > 1.0 + 1e-12:
                raise BoundViolation(f"acceptance {acc} > 1 at site {x}, state {labels}")
            if rng.random() < acc:
                old = int(labels[x])
                labels[x] = old % q + 1
                events.append(TrajectoryEvent(t, x, old, int(labels[x]), "rotation"))
        else:
            x = int((u - rot_total) // kernel_rate)
            x = min(x, n - 1)
            cond = kernel_cond(labels, x, theta)
            new = int(rng.choice(q, p=cond)) + 1
            if new != labels[x]:
                events.append(TrajectoryEvent(t, x, int(labels[x]), new, "kernel"))
                labels[x] = new
    return Trajectory(events, times[:k_snap], snaps[:k_snap], start, labels, t_end, proposals)


def _simulate_mc_driver(labels, t_end, params, schedule, rng, bound, sweeps, M,
                        initial_phi, burn_in, times, dt):
    q, n = params.q, params.n_sites
    start = labels.copy()
    mask = ConstraintMask.from_state(labels, q)
    if initial_phi is None:
        theta0 = params.theta if schedule is None else float(schedule(0.0))
        phi = sample_constrained_gibbs(mask, params.with_theta(theta0), burn_in, rng)
    else:
        phi = np.asarray(initial_phi, dtype=float)
        if np.any(discretize(phi, q) != labels):
            raise ValueError("initial_phi does not lie in the arcs of the initial labels")
    phi = np.array(phi, dtype=float).reshape(1, n)
    theta0 = params.theta if schedule is None else schedule.theta0
    speed = 0.0 if schedule is None else schedule.speed
    lam = bound.sum() * t_end
    max_events = int(lam + 10 * math.sqrt(lam) + 100)
    nodes, weights = np.polynomial.legendre.leggauss(M)
    J = masked_couplings(params, mask)
    ev_t, ev_s, ev_o, snaps, proposals, status = _simulate_mc(
        labels, phi, J, np.asarray(params.field, float), float(params.beta),
        float(theta0), float(speed), q, float(t_end), bound, int(sweeps), nodes, weights,
        rng, 100_000, float(dt), len(times), max_events)
    if status == 1:
        raise BoundViolation("exit ratio exceeded the thinning envelope")
    if status == 2:
        raise RuntimeError("heat-bath rejection sampler failed to accept")
    if status == 3:
        raise RuntimeError("event buffer overflow")
    events = [TrajectoryEvent(float(t), int(s), int(o), int(o) % q + 1, "rotation")
              for t, s, o in zip(ev_t, ev_s, ev_o)]
    return Trajectory(events, times[:len(snaps)], snaps, start, labels, t_end, int(proposals))
