"""Lattice geometry and long-range coupling tables.

Sites of a finite window are indexed in row-major order. Couplings are
``J(x, y) = |x - y|^{-alpha}``; on a torus each pair interacts once through
its minimum-image displacement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

BOUNDARIES = ("torus", "fixed")
NORMS = ("euclidean",)


@dataclass(frozen=True)
class LatticeSpec:
    """Finite window of Z^d.

    ``boundary="fixed"`` surrounds the window by a frozen exterior whose
    interactions are kept up to distance ``radius``.
    """

    dimension: int
    extent: tuple[int, ...]
    alpha: float
    boundary: str = "torus"
    radius: int = 0
    norm: str = "euclidean"

    def __post_init__(self):
        object.__setattr__(self, "extent", tuple(int(e) for e in self.extent))
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if len(self.extent) != self.dimension:
            raise ValueError(
                f"extent has {len(self.extent)} axes but dimension is {self.dimension}"
            )
        if any(e < 1 for e in self.extent):
            raise ValueError(f"extent must be >= 1 on every axis, got {self.extent}")
        d = self.dimension
        if not d < self.alpha < 2 * d:
            raise ValueError(
                f"alpha={self.alpha} outside the open range (d, 2d) = ({d}, {2 * d})"
            )
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        if self.boundary == "fixed" and self.radius < 1:
            raise ValueError(f"fixed boundary needs radius >= 1, got {self.radius}")
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}, got {self.norm!r}")

    @property
    def n_sites(self) -> int:
        return math.prod(self.extent)

    def coordinates(self) -> np.ndarray:
        """Integer coordinates of all sites, shape (n_sites, dimension)."""
        grids = np.indices(self.extent).reshape(self.dimension, -1)
        return grids.T.copy()

    def displacement(self, x: int, y: int) -> np.ndarray:
        """Displacement y - x, minimum image on a torus."""
        coords = self.coordinates()
        dx = coords[y] - coords[x]
        if self.boundary == "torus":
            ext = np.asarray(self.extent)
            dx = (dx + ext // 2) % ext - ext // 2
        return dx


@dataclass(frozen=True)
class CouplingTable:
    """Pairwise couplings of a finite window.

    ``exterior`` holds, per site, the summed coupling to the frozen exterior
    (zero on a torus); ``exterior_tail`` bounds what the truncation at
    ``spec.radius`` leaves out.
    """

    spec: LatticeSpec
    J: np.ndarray
    row_sums: np.ndarray
    exterior: np.ndarray
    exterior_tail: float = 0.0

    @property
    def n_sites(self) -> int:
        return self.J.shape[0]


def _pair_distances(spec: LatticeSpec) -> np.ndarray:
    coords = spec.coordinates()
    diff = np.abs(coords[None, :, :] - coords[:, None, :])
    if spec.boundary == "torus":
        ext = np.asarray(spec.extent)
        diff = np.minimum(diff, ext - diff)
    return np.sqrt((diff.astype(float) ** 2).sum(axis=-1))


def _exterior_sums(spec: LatticeSpec) -> np.ndarray:
    R = spec.radius
    d = spec.dimension
    axes = [np.arange(-R, R + 1)] * d
    offsets = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    norms = np.sqrt((offsets.astype(float) ** 2).sum(axis=1))
    keep = (norms > 0) & (norms <= R)
    offsets, norms = offsets[keep], norms[keep]
    weights = norms ** (-spec.alpha)
    coords = spec.coordinates()
    ext = np.asarray(spec.extent)
    out = np.empty(len(coords))
    for i, c in enumerate(coords):
        target = c + offsets
        outside = np.any((target < 0) | (target >= ext), axis=1)
        out[i] = weights[outside].sum()
    return out


def build_coupling_table(spec: LatticeSpec) -> CouplingTable:
    """Precompute ``J(x, y) = |x - y|^{-alpha}`` for all pairs of the window."""
    dist = _pair_distances(spec)
    with np.errstate(divide="ignore"):
        J = np.where(dist > 0, dist ** (-spec.alpha), 0.0)
    np.fill_diagonal(J, 0.0)
    row_sums = J.sum(axis=1)
    if spec.boundary == "fixed":
        exterior = _exterior_sums(spec)
        _, tail = lattice_tail_sum(spec.alpha, spec.dimension, spec.radius)
    else:
        exterior = np.zeros(spec.n_sites)
        tail = 0.0
    for arr in (J, row_sums, exterior):
        arr.setflags(write=False)
    return CouplingTable(spec=spec, J=J, row_sums=row_sums, exterior=exterior,
                         exterior_tail=float(tail))


def _sum_d1(alpha: float, cutoff: int) -> float:
    total = 0.0
    chunk = 1 << 20
    # Sum from the far end so the small terms are accumulated first.
    hi = cutoff
    while hi >= 1:
        lo = max(1, hi - chunk + 1)
        n = np.arange(hi, lo - 1, -1, dtype=float)
        total += float(np.sum(n ** (-alpha)))
        hi = lo - 1
    return 2.0 * total


def _sum_d2(alpha: float, lo: float, hi: float) -> float:
    """Sum of |x|^{-alpha} over x in Z^2 with lo < |x| <= hi."""
    m = int(math.floor(hi))
    total = 0.0
    ys = np.arange(-m, m + 1, dtype=float)
    for i in range(-m, m + 1):
        r2 = i * i + ys * ys
        sel = (r2 > lo * lo) & (r2 <= hi * hi)
        total += float(np.sum(r2[sel] ** (-alpha / 2)))
    return total


_R0 = math.sqrt(0.5)  # half-diagonal of a unit square


def _tail_d2(alpha: float, cutoff: float) -> float:
    # Each lattice point x with |x| > c owns its unit square Q_x, on which
    # |y| - r0 <= |x|; so |x|^{-alpha} <= int_{Q_x} (|y| - r0)^{-alpha} dy.
    if cutoff < 2:
        return _sum_d2(alpha, cutoff, 2.0) + _tail_d2(alpha, 2.0)
    a = cutoff - 2 * _R0
    return 2 * math.pi * (a ** (2 - alpha) / (alpha - 2) + _R0 * a ** (1 - alpha) / (alpha - 1))


def lattice_tail_sum(alpha: float, d: int, cutoff: int) -> tuple[float, float]:
    """Partial sum of ``|x|^{-alpha}`` over ``0 < |x| <= cutoff`` in Z^d and a
    rigorous upper bound on the remainder.

    >>> lattice_tail_sum(1.5, 1, 1)[0]
    2.0
    """
    if d not in (1, 2):
        raise ValueError(f"d must be 1 or 2, got {d}")
    if not alpha > d:
        raise ValueError(f"alpha={alpha} must exceed d={d} for a summable tail")
    if cutoff < 1:
        raise ValueError(f"cutoff must be >= 1, got {cutoff}")
    cutoff = int(cutoff)
    if d == 1:
        partial = _sum_d1(alpha, cutoff)
        tail = 2.0 * cutoff ** (1 - alpha) / (alpha - 1)
    else:
        if alpha <= 2:
            raise ValueError(f"alpha={alpha} must exceed 2 in d=2")
        partial = _sum_d2(alpha, 0.0, float(cutoff))
        tail = _tail_d2(alpha, float(cutoff))
    return partial, tail
