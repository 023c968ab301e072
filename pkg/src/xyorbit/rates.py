"""Rotation rates of the discretised dynamics.

The rate at which site x moves from label k to k + 1 is

    c = nu(exp(-H_x(r, .))) / nu(int_arc exp(-H_x(u, .)) du)

where r is the right endpoint of arc k and nu is the Gibbs measure of the
other sites, constrained to their arcs and with every interaction of x
removed. Equivalently, c is the Gibbs probability flux through the right
endpoint divided by the occupation of the arc.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .discretization import arc_endpoints
from .gibbs import (ConstraintMask, gauss_legendre, masked_couplings, quadrature_measure,
                    sample_constrained_gibbs)
from .model import TWO_PI, ModelParams, local_energy_sup

JACKKNIFE_BLOCKS = 20


@dataclass(frozen=True)
class RateEstimate:
    value: float
    stderr: float
    method: str
    samples: int

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError(f"rate must be positive, got {self.value}")


def _exit_terms(x: int, state, params: ModelParams):
    """Numerator and denominator integrands as functions of the other spins."""
    q = params.q
    lo, r = arc_endpoints(int(state[x]), q)
    J = params.signed_J
    hx = params.field[x]
    beta, theta = params.beta, params.theta
    # exp(-H_x) <= exp(scale) keeps both terms below 1; the factor cancels.
    scale = local_energy_sup(x, params)
    return lo, r, J[x], hx, beta, theta, scale


def rate_quadrature(state, x: int, params: ModelParams, M: int = 64) -> RateEstimate:
    """Rate of ``state -> state^x`` by tensor quadrature over the other sites."""
    state = np.asarray(state)
    mask = ConstraintMask.from_state(state, params.q, exclude=[x])
    nu = quadrature_measure(mask, params, M)
    lo, r, Jx, hx, beta, theta, scale = _exit_terms(x, state, params)
    u_in, w_in = gauss_legendre(lo, TWO_PI / params.q, M)

    def field_ab(mesh):
        a = beta * hx * math.cos(theta)
        b = beta * hx * math.sin(theta)
        for i, s in enumerate(nu.sites):
            a = a + beta * Jx[s] * np.cos(mesh[i])
            b = b + beta * Jx[s] * np.sin(mesh[i])
        return a, b

    def numerator(mesh):
        a, b = field_ab(mesh)
        return np.exp(a * math.cos(r) + b * math.sin(r) - scale)

    def denominator(mesh):
        a, b = field_ab(mesh)
        a = np.asarray(a)[..., None]
        b = np.asarray(b)[..., None]
        return np.sum(w_in * np.exp(a * np.cos(u_in) + b * np.sin(u_in) - scale), axis=-1)

    num = nu.expect(numerator)
    den = nu.expect(denominator)
    assert den > 0, "arc occupation vanished; the integrand is bounded below"
    return RateEstimate(num / den, 0.0, "quadrature", 0)


def _jackknife_ratio(num: np.ndarray, den: np.ndarray, blocks: int = JACKKNIFE_BLOCKS):
    n = len(num) - len(num) % blocks
    nb = num[:n].reshape(blocks, -1).sum(axis=1)
    db = den[:n].reshape(blocks, -1).sum(axis=1)
    loo = (nb.sum() - nb) / (db.sum() - db)
    var = (blocks - 1) / blocks * np.sum((loo - loo.mean()) ** 2)
    return float(math.sqrt(var))


def rate_mc(state, x: int, params: ModelParams, samples: int, rng: np.random.Generator,
            sweeps: int = 100) -> RateEstimate:
    """Monte Carlo rate: ratio of empirical means over independent draws of
    the constrained measure, each after ``sweeps`` heat-bath sweeps."""
    if samples < 100:
        raise ValueError(f"samples must be >= 100, got {samples}")
    state = np.asarray(state)
    mask = ConstraintMask.from_state(state, params.q, exclude=[x])
    phi = sample_constrained_gibbs(mask, params, sweeps, rng, replicas=samples)
    lo, r, Jx, hx, beta, theta, scale = _exit_terms(x, state, params)
    Jx = Jx.copy()
    Jx[x] = 0.0
    a = beta * (np.cos(phi) @ Jx + hx * math.cos(theta))
    b = beta * (np.sin(phi) @ Jx + hx * math.sin(theta))
    u_in, w_in = gauss_legendre(lo, TWO_PI / params.q, 64)
    num = np.exp(a * math.cos(r) + b * math.sin(r) - scale)
    den = np.exp(np.outer(a, np.cos(u_in)) + np.outer(b, np.sin(u_in)) - scale) @ w_in
    value = num.mean() / den.mean()
    return RateEstimate(float(value), _jackknife_ratio(num, den), "monte_carlo", samples)


def rate_upper_bound(x: int, params: ModelParams) -> float:
    """exp(2 sup|H_x|) q / 2pi, valid for every configuration and field angle."""
    return math.exp(2.0 * local_energy_sup(x, params)) * params.q / TWO_PI


def rate_arc_bound(x: int, params: ModelParams) -> float:
    """(q / 2pi) exp(L 2pi/q) with L = sup|H_x| the Lipschitz constant of
    u -> H_x(u). Bounds the exit ratio pointwise in the other spins, hence
    also the rate."""
    lip = local_energy_sup(x, params)
    return params.q / TWO_PI * math.exp(lip * TWO_PI / params.q)


def rate_envelope(params: ModelParams) -> np.ndarray:
    """Per-site dominating rate used for thinning: the smaller valid bound."""
    return np.array([min(rate_upper_bound(x, params), rate_arc_bound(x, params))
                     for x in range(params.n_sites)])


def exit_ratio(phi, x: int, params: ModelParams, M: int = 32) -> float:
    """Pointwise exit ratio exp(-H_x(r)) / int_arc exp(-H_x) at the spins ``phi``.

    Its expectation under the Gibbs measure constrained to all arcs of the
    current labels equals the rate.
    """
    q = params.q
    label = int(math.floor(phi[x] * q / TWO_PI)) + 1
    lo, _ = arc_endpoints(min(label, q), q)
    nodes, weights = np.polynomial.legendre.leggauss(M)
    mask = ConstraintMask.free(params.n_sites, q)
    return _kernels.exit_ratio(np.asarray(phi, float), masked_couplings(params, mask),
                               np.asarray(params.field, float), params.beta, params.theta,
                               x, lo, TWO_PI / q, nodes, weights)

