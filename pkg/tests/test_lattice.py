import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import zeta

from xyorbit.lattice import LatticeSpec, build_coupling_table, lattice_tail_sum


def test_direct_formula():
    t = build_coupling_table(LatticeSpec(1, (8,), 1.5))
    assert t.J[0, 2] == pytest.approx(2 ** -1.5, abs=1e-12)
    assert t.J[0, 2] == pytest.approx(0.3535533906, abs=1e-10)


def test_minimum_image():
    t = build_coupling_table(LatticeSpec(1, (6,), 1.5))
    assert t.J[0, 5] == pytest.approx(1.0)


def test_ring3_row_sum_brute_force():
    t = build_coupling_table(LatticeSpec(1, (3,), 1.5))
    # both neighbours sit at minimum-image distance 1
    for x in range(3):
        brute = sum(min(abs(x - y), 3 - abs(x - y)) ** -1.5 for y in range(3) if y != x)
        assert t.row_sums[x] == pytest.approx(brute, abs=1e-12)
        assert t.row_sums[x] == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("alpha,d", [(2.5, 1), (1.0, 1), (2.0, 1), (2.0, 2), (4.0, 2)])
def test_alpha_range_rejected(alpha, d):
    with pytest.raises(ValueError, match="alpha"):
        LatticeSpec(d, (3,) * d, alpha)


def test_zero_extent_rejected():
    with pytest.raises(ValueError):
        LatticeSpec(1, (0,), 1.5)


def test_fixed_needs_radius():
    with pytest.raises(ValueError):
        LatticeSpec(1, (3,), 1.5, boundary="fixed", radius=0)


@pytest.mark.parametrize("spec", [LatticeSpec(1, (7,), 1.3), LatticeSpec(2, (3, 4), 3.2),
                                  LatticeSpec(1, (4,), 1.5, boundary="fixed", radius=5)])
def test_table_invariants(spec):
    t = build_coupling_table(spec)
    assert np.array_equal(t.J, t.J.T)
    assert np.all(np.diag(t.J) == 0)
    assert np.all(t.J >= 0)
    np.testing.assert_allclose(t.row_sums, t.J.sum(axis=1), rtol=0, atol=1e-12)


def test_torus_translation_invariance():
    spec = LatticeSpec(2, (3, 4), 2.7)
    t = build_coupling_table(spec)
    coords = spec.coordinates()
    ext = np.array(spec.extent)
    index = {tuple(c): i for i, c in enumerate(coords)}
    for shift in itertools.product(range(3), range(4)):
        moved = [index[tuple((c + shift) % ext)] for c in coords]
        np.testing.assert_allclose(t.J[np.ix_(moved, moved)], t.J, atol=1e-15)


def test_fixed_exterior_is_positive_and_finite():
    t = build_coupling_table(LatticeSpec(1, (4,), 1.5, boundary="fixed", radius=10))
    assert np.all(t.exterior > 0) and np.all(np.isfinite(t.exterior))
    # end sites see more of the outside than the centre
    assert t.exterior[0] > t.exterior[1]


def test_tail_sum_trivial_cutoffs():
    assert lattice_tail_sum(1.5, 1, 1)[0] == pytest.approx(2.0)
    assert lattice_tail_sum(3.0, 2, 1)[0] == pytest.approx(4.0)


def test_tail_sum_brackets_zeta():
    exact = 2 * zeta(1.5)
    partial, tail = lattice_tail_sum(1.5, 1, 10 ** 6)
    assert partial < exact < partial + tail
    assert partial + tail == pytest.approx(5.2247506, abs=1e-6)


@pytest.mark.parametrize("d,alpha", [(1, 1.5), (1, 1.9), (2, 2.5), (2, 3.5)])
def test_tail_monotone_in_cutoff(d, alpha):
    cuts = [1, 2, 5, 10, 40, 100]
    vals = [lattice_tail_sum(alpha, d, c) for c in cuts]
    tails = [v[1] for v in vals]
    uppers = [v[0] + v[1] for v in vals]
    assert all(a > b for a, b in zip(tails, tails[1:]))
    assert all(a >= b - 1e-12 for a, b in zip(uppers, uppers[1:]))


def test_d2_upper_bound_is_rigorous():
    # brute-force a large box and compare with the certified bound at a small cutoff
    alpha = 3.0
    R = 600
    ax = np.arange(-R, R + 1)
    r2 = ax[:, None] ** 2 + ax[None, :] ** 2
    r2 = r2[r2 > 0]
    brute = np.sum(r2.astype(float) ** (-alpha / 2))
    partial, tail = lattice_tail_sum(alpha, 2, 10)
    assert brute < partial + tail


@settings(max_examples=30, deadline=None)
@given(alpha=st.floats(1.05, 1.95), cutoff=st.integers(1, 5000))
def test_d1_bound_contains_zeta(alpha, cutoff):
    partial, tail = lattice_tail_sum(alpha, 1, cutoff)
    assert partial <= 2 * zeta(alpha) <= partial + tail * (1 + 1e-9)
