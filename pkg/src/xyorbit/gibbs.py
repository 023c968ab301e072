"""Finite-volume continuous Gibbs measures, free or constrained to arcs.

Sampling is exact single-site heat-bath (rejection on each arc); the
tensor Gauss-Legendre quadrature here is the deterministic oracle that the
samplers and the rate estimators are checked against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .discretization import arc_midpoints
from .model import TWO_PI, ModelParams

MAX_TRIES = 100_000


class BudgetError(ValueError):
    """A quadrature or state-space request exceeds its configured budget."""


@dataclass(frozen=True)
class ConstraintMask:
    """Per-site arc constraint (label 1..q, or 0 for free) plus excluded sites.

    Excluded sites are neither updated nor integrated, and every interaction
    touching them is dropped from the target measure.
    """

    labels: np.ndarray
    excluded: np.ndarray
    q: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        excluded = np.zeros(len(labels), bool) if self.excluded is None \
            else np.asarray(self.excluded, dtype=bool)
        if labels.shape != excluded.shape:
            raise ValueError("labels and excluded must have the same length")
        if np.any((labels < 0) | (labels > self.q)):
            raise ValueError(f"labels must lie in 0..{self.q}")
        if np.any(labels[excluded] != 0):
            raise ValueError("excluded sites cannot carry an arc constraint")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "excluded", excluded)

    @classmethod
    def free(cls, n_sites: int, q: int) -> "ConstraintMask":
        return cls(np.zeros(n_sites, np.int64), np.zeros(n_sites, bool), q)

    @classmethod
    def from_state(cls, state, q: int, exclude=()) -> "ConstraintMask":
        labels = np.array(state, dtype=np.int64)
        excluded = np.zeros(len(labels), bool)
        excluded[list(exclude)] = True
        labels[excluded] = 0
        return cls(labels, excluded, q)

    @property
    def n_sites(self) -> int:
        return len(self.labels)

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(~self.excluded)

    def arcs(self) -> tuple[np.ndarray, np.ndarray]:
        """Left endpoints and widths of each site's allowed interval."""
        constrained = self.labels > 0
        width = np.where(constrained, TWO_PI / self.q, TWO_PI)
        lo = np.where(constrained, TWO_PI * (self.labels - 1) / self.q, 0.0)
        return lo, width


def masked_couplings(params: ModelParams, mask: ConstraintMask) -> np.ndarray:
    J = params.signed_J.copy()
    J[mask.excluded, :] = 0.0
    J[:, mask.excluded] = 0.0
    return J


def _run_sweeps(phi, mask, params, sweeps, rng, order=None):
    lo, width = mask.arcs()
    B = phi.shape[0]
    lo_b = np.broadcast_to(lo, (B, mask.n_sites)).copy()
    w_b = np.broadcast_to(width, (B, mask.n_sites)).copy()
    if order is None:
        order = mask.active
    failures = _kernels.heatbath_sweeps(
        phi, masked_couplings(params, mask), np.asarray(params.field, float),
        float(params.beta), float(params.theta), lo_b, w_b,
        np.asarray(order, np.int64), int(sweeps), rng, MAX_TRIES)
    if failures:
        raise RuntimeError(f"heat-bath rejection exceeded {MAX_TRIES} proposals "
                           f"{failures} times; beta is too large for this sampler")


def heatbath_step(config, x: int, mask: ConstraintMask, params: ModelParams,
                  rng: np.random.Generator) -> np.ndarray:
    """Resample the spin at ``x`` from its conditional law given the rest.

    ``config`` may be a single configuration or a batch (B, N).
    """
    if mask.excluded[x]:
        raise ValueError(f"site {x} is excluded and cannot be resampled")
    phi = np.array(config, dtype=float, ndmin=2)
    _run_sweeps(phi, mask, params, 1, rng, order=[x])
    return phi[0] if np.ndim(config) == 1 else phi


def sample_constrained_gibbs(target: ConstraintMask, params: ModelParams, sweeps: int,
                             rng: np.random.Generator, replicas: int | None = None,
                             fill: float = 0.0) -> np.ndarray:
    """Systematic-scan heat-bath from a fixed start.

    Constrained sites start at their arc midpoint, free sites uniformly;
    excluded sites hold ``fill`` and are never read. With ``replicas`` set,
    that many independent chains are returned as a (replicas, N) array.
    """
    if sweeps < 1:
        raise ValueError(f"sweeps must be >= 1, got {sweeps}")
    B = 1 if replicas is None else int(replicas)
    phi = np.full((B, target.n_sites), float(fill))
    constrained = target.labels > 0
    phi[:, constrained] = arc_midpoints(target.labels[constrained], target.q)
    free = ~constrained & ~target.excluded
    phi[:, free] = rng.uniform(0.0, TWO_PI, size=(B, int(free.sum())))
    _run_sweeps(phi, target, params, sweeps, rng)
    return phi[0] if replicas is None else phi


# --- quadrature ------------------------------------------------------------

def gauss_legendre(lo: float, width: float, M: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [lo, lo + width]."""
    x, w = np.polynomial.legendre.leggauss(M)
    return lo + 0.5 * width * (x + 1.0), 0.5 * width * w


@dataclass(frozen=True)
class QuadratureGrid:
    """Per-site Gauss-Legendre rules of a tensor grid over the active sites."""

    sites: np.ndarray
    nodes: tuple
    weights: tuple

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(n) for n in self.nodes)

    def mesh(self) -> list[np.ndarray]:
        k = len(self.nodes)
        out = []
        for i, n in enumerate(self.nodes):
            shape = [1] * k
            shape[i] = len(n)
            out.append(n.reshape(shape))
        return out


@dataclass(frozen=True)
class TensorMeasure:
    """Normalised quadrature weights of a Gibbs measure on a tensor grid."""

    grid: QuadratureGrid
    weights: np.ndarray

    @property
    def sites(self) -> np.ndarray:
        return self.grid.sites

    def expect(self, observable) -> float:
        """Expectation of ``observable(mesh)``, where ``mesh[i]`` broadcasts
        the nodes of ``sites[i]``."""
        vals = np.broadcast_to(observable(self.grid.mesh()), self.weights.shape)
        return float(np.sum(self.weights * vals))


def _check_budget(n_sites: int, M: int, points: int, max_sites: int, max_order: int,
                  max_points: int):
    if n_sites > max_sites or M > max_order or points > max_points:
        raise BudgetError(
            f"quadrature budget exceeded: {n_sites} active sites (max {max_sites}), "
            f"order M={M} (max {max_order}), {points} grid points (max {max_points})")


def quadrature_grid(mask: ConstraintMask, M: int) -> QuadratureGrid:
    lo, width = mask.arcs()
    sites = mask.active
    nodes, weights = [], []
    for s in sites:
        n, w = gauss_legendre(lo[s], width[s], M)
        nodes.append(n)
        weights.append(w)
    return QuadratureGrid(sites=sites, nodes=tuple(nodes), weights=tuple(weights))


def log_density(mesh: list[np.ndarray], sites, J: np.ndarray, field: np.ndarray,
                beta: float, theta: float):
    """Unnormalised log Gibbs weight -H on broadcast node arrays of ``sites``."""
    out = 0.0
    for i, si in enumerate(sites):
        out = out + beta * field[si] * np.cos(mesh[i] - theta)
        for j in range(i + 1, len(sites)):
            jij = J[si, sites[j]]
            if jij != 0.0:
                out = out + beta * jij * np.cos(mesh[i] - mesh[j])
    return out


def _energy_scale(sites, J, field, beta) -> float:
    sub = np.abs(J[np.ix_(sites, sites)])
    return float(beta * (0.5 * sub.sum() + np.sum(field[sites])))


def quadrature_measure(mask: ConstraintMask, params: ModelParams, M: int = 64,
                       max_sites: int = 5, max_order: int = 64,
                       max_points: int = 1 << 26) -> TensorMeasure:
    grid = quadrature_grid(mask, M)
    _check_budget(len(grid.sites), M, math.prod(grid.shape), max_sites, max_order, max_points)
    J = masked_couplings(params, mask)
    field = np.asarray(params.field, float)
    logd = log_density(grid.mesh(), grid.sites, J, field, params.beta, params.theta)
    logd = logd - _energy_scale(grid.sites, J, field, params.beta)
    w = np.exp(logd)
    for i, wi in enumerate(grid.weights):
        shape = [1] * len(grid.shape)
        shape[i] = len(wi)
        w = w * wi.reshape(shape)
    w = np.broadcast_to(w, grid.shape)
    return TensorMeasure(grid=grid, weights=w / w.sum())


def label_table(rules, params: ModelParams) -> np.ndarray:
    """Sum of Gibbs weights grouped by arc label, for every site.

    ``rules[s] = (nodes, weights)`` with both of shape (q, m_s): row k holds
    the nodes assigned to label k + 1. Returns an array of shape (q,)*N,
    scaled by a common factor ``exp(-energy scale)``.
    """
    N = params.n_sites
    q = params.q
    J = params.signed_J
    field = np.asarray(params.field, float)
    beta, theta = params.beta, params.theta
    sites = np.arange(N)
    shift = _energy_scale(sites, J, field, beta)
    flat = [np.asarray(r[0], float).ravel() for r in rules]
    wflat = [np.asarray(r[1], float).ravel() for r in rules]
    ms = [np.shape(r[0])[1] for r in rules]

    rest = list(range(1, N))
    k = len(rest)
    mesh = []
    for i, s in enumerate(rest):
        shape = [1] * k
        shape[i] = len(flat[s])
        mesh.append(flat[s].reshape(shape))
    rest_logd = log_density(mesh, rest, J, field, beta, theta) - shift
    rest_w = np.ones([1] * k)
    for i, s in enumerate(rest):
        rest_w = rest_w * wflat[s].reshape(mesh[i].shape)
    split = []
    for s in rest:
        split += [q, ms[s]]
    m_axes = tuple(range(1, 2 * k, 2))

    table = np.zeros((q,) * N)
    for idx, (u, w0) in enumerate(zip(flat[0], wflat[0])):
        logd = rest_logd + beta * field[0] * math.cos(u - theta)
        for i, s in enumerate(rest):
            if J[0, s] != 0.0:
                logd = logd + beta * J[0, s] * np.cos(u - mesh[i])
        vals = w0 * rest_w * np.exp(logd)
        vals = np.broadcast_to(vals, tuple(len(flat[s]) for s in rest))
        table[idx // ms[0]] += vals.reshape(split).sum(axis=m_axes) if k else vals
    return table


def composite_rule(q: int, M: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule of order M on each of the q arcs, shape (q, M)."""
    nodes = np.empty((q, M))
    weights = np.empty((q, M))
    for k in range(q):
        nodes[k], weights[k] = gauss_legendre(TWO_PI * k / q, TWO_PI / q, M)
    return nodes, weights


def check_state_budget(params: ModelParams, max_states: int):
    n_states = params.q ** params.n_sites
    if n_states > max_states:
        raise BudgetError(f"state space q^N = {params.q}^{params.n_sites} = {n_states} "
                          f"exceeds max_states={max_states}")


def discrete_marginal(params: ModelParams, M: int = 64, max_states: int = 4096) -> np.ndarray:
    """Law of the arc labels under the finite-volume Gibbs measure.

    Returns an array of shape (q,)*N indexed by ``labels - 1``.
    """
    check_state_budget(params, max_states)
    rule = composite_rule(params.q, M)
    table = label_table([rule] * params.n_sites, params)
    return table / table.sum()


def conditional_labels(marginal: np.ndarray, state, x: int) -> np.ndarray:
    """Conditional law of the label at ``x`` given the other labels."""
    idx = [int(s) - 1 for s in state]
    idx[x] = slice(None)
    row = marginal[tuple(idx)]
    return row / row.sum()
