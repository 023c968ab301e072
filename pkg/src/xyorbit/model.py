"""Continuous-spin long-range XY energies.

All energies carry the inverse temperature, so Gibbs weights are
``exp(-H)``. The single-site energy is

    H_x(u) = -beta * (s * sum_y J(x, y) cos(u - phi_y) + h_x cos(u - theta))

with ``s = +1`` for the ferromagnetic sign. ``h_x = h + exterior_x``: in a
fixed-exterior window the frozen outside spins point along the field
angle, so they act as an extra field of strength ``exterior_x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .lattice import CouplingTable

TWO_PI = 2.0 * math.pi


def wrap_angle(phi):
    """Reduce angles to [0, 2pi), guarding the rounding case mod(-tiny) == 2pi."""
    out = np.mod(phi, TWO_PI)
    return np.where(out >= TWO_PI, 0.0, out)


@dataclass(frozen=True)
class ModelParams:
    couplings: CouplingTable
    beta: float
    q: int = 4
    h: float = 0.0
    theta: float = 0.0
    sign: float = 1.0

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not self.h >= 0:
            raise ValueError(f"h must be >= 0, got {self.h}")
        if int(self.q) != self.q or self.q < 2:
            raise ValueError(f"q must be an integer >= 2, got {self.q}")
        if self.sign not in (1.0, -1.0):
            raise ValueError(f"sign must be +1 (ferromagnetic) or -1, got {self.sign}")
        object.__setattr__(self, "q", int(self.q))
        object.__setattr__(self, "theta", float(wrap_angle(self.theta)))

    @property
    def n_sites(self) -> int:
        return self.couplings.n_sites

    @property
    def field(self) -> np.ndarray:
        """Per-site field strength h_x (without beta)."""
        return self.h + np.asarray(self.couplings.exterior)

    @property
    def signed_J(self) -> np.ndarray:
        return self.sign * np.asarray(self.couplings.J)

    def with_theta(self, theta: float) -> "ModelParams":
        return replace(self, theta=theta)

    def with_field(self, h: float) -> "ModelParams":
        return replace(self, h=h)


def local_field(x: int, config: np.ndarray, params: ModelParams) -> tuple[float, float]:
    """Cartesian components (a, b) with ``-H_x(u) = a cos u + b sin u``."""
    phi = np.asarray(config, dtype=float)
    Jx = params.signed_J[x].copy()
    Jx[x] = 0.0
    hx = params.field[x]
    a = params.beta * (Jx @ np.cos(phi) + hx * math.cos(params.theta))
    b = params.beta * (Jx @ np.sin(phi) + hx * math.sin(params.theta))
    return float(a), float(b)


def local_energy(x: int, u, config: np.ndarray, params: ModelParams):
    """H_x(u, config outside x). ``u`` may be an array of trial angles."""
    a, b = local_field(x, config, params)
    return -(a * np.cos(u) + b * np.sin(u))


def local_energy_sup(x: int, params: ModelParams) -> float:
    """Uniform bound on |H_x| over all configurations."""
    return float(params.beta * (params.couplings.row_sums[x] + params.field[x]))


def rotate_config(config: np.ndarray, eps: float) -> np.ndarray:
    """Rotate every spin by ``eps``; the field angle is left to the caller."""
    return wrap_angle(np.asarray(config, dtype=float) + eps)


def total_energy(config: np.ndarray, params: ModelParams) -> float:
    """Finite-volume Hamiltonian, each pair counted once."""
    phi = np.asarray(config, dtype=float)
    J = params.signed_J
    pair = 0.5 * np.sum(J * np.cos(phi[:, None] - phi[None, :]))
    single = np.sum(params.field * np.cos(phi - params.theta))
    return float(-params.beta * (pair + single))


def magnetisation(config: np.ndarray) -> complex:
    """Mean spin as a complex number; works on the last axis of a batch."""
    phi = np.asarray(config, dtype=float)
    return np.mean(np.exp(1j * phi), axis=-1)
