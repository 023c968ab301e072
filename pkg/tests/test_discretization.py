import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import zeta

from xyorbit.discretization import (arc_endpoints, arc_midpoints, discretize,
                                    dobrushin_certificate, enumerate_states, next_label,
                                    state_index)
from xyorbit.lattice import LatticeSpec, build_coupling_table
from xyorbit.model import ModelParams

TWO_PI = 2 * math.pi


def test_discretize_examples():
    assert discretize(math.pi, 4) == 3
    assert discretize(0.0, 4) == 1
    assert discretize(TWO_PI - 1e-9, 8) == 8


def test_arc_endpoints_examples():
    assert arc_endpoints(2, 4) == pytest.approx((math.pi / 2, math.pi))
    assert arc_endpoints(2, 2) == pytest.approx((math.pi, TWO_PI))
    with pytest.raises(ValueError):
        arc_endpoints(0, 4)
    with pytest.raises(ValueError):
        arc_endpoints(5, 4)


def test_endpoint_labels_and_midpoints_exhaustive():
    for q in range(2, 65):
        for k in range(1, q + 1):
            lo, hi = arc_endpoints(k, q)
            assert discretize(lo, q) == k
            assert discretize(hi % TWO_PI, q) == k % q + 1
            assert discretize(arc_midpoints(k, q), q) == k


def test_arc_membership(rng):
    phi = rng.uniform(0, TWO_PI, 100_000)
    for q in (2, 7, 12):
        lab = discretize(phi, q)
        lo = TWO_PI * (lab - 1) / q
        hi = TWO_PI * lab / q
        assert np.all((lo <= phi) & (phi < hi))


def test_label_shift_compatibility():
    phi = np.linspace(0, TWO_PI, 20001)[:-1]
    for q in (3, 4, 8, 13):
        shifted = discretize(np.mod(phi + TWO_PI / q, TWO_PI), q)
        ok = shifted == next_label(discretize(phi, q), q)
        # floating rounding can move a point sitting exactly on an arc boundary
        on_edge = np.isclose(np.mod(phi * q / TWO_PI, 1.0), 0.0, atol=1e-9) | \
            np.isclose(np.mod(phi * q / TWO_PI, 1.0), 1.0, atol=1e-9)
        assert np.all(ok | on_edge)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5), st.integers(2, 6), st.data())
def test_state_index_roundtrip(n, q, data):
    states = enumerate_states(n, q)
    i = data.draw(st.integers(0, len(states) - 1))
    assert state_index(states[i], q) == i


def params_d1(beta):
    return ModelParams(build_coupling_table(LatticeSpec(1, (3,), 1.5)), beta=beta)


def test_certificate_threshold():
    spec = LatticeSpec(1, (3,), 1.5)
    cert = dobrushin_certificate(params_d1(1.0), spec, 17)
    assert cert.q_threshold == pytest.approx(math.pi * 2 * zeta(1.5), abs=1e-5)
    assert cert.q_threshold == pytest.approx(16.41404, abs=1e-5)
    assert cert.passes
    assert not dobrushin_certificate(params_d1(1.0), spec, 16).passes
    assert cert.rigor == "heuristic_extras"
    assert cert.heuristic_cbar == pytest.approx(cert.pair_bound_sum / 4)


def test_certificate_passes_iff_threshold():
    spec = LatticeSpec(1, (3,), 1.5)
    for beta in (0.2, 0.5, 1.0, 2.0):
        for q in range(2, 60):
            c = dobrushin_certificate(params_d1(beta), spec, q)
            assert c.passes == (c.pair_bound_sum < 4) == (q > c.q_threshold)


def test_threshold_monotone_in_beta_and_alpha():
    for d, alphas in ((1, (1.2, 1.5, 1.8)), (2, (2.3, 3.0, 3.7))):
        grid = np.empty((3, len(alphas)))
        for i, beta in enumerate((0.5, 1.0, 2.0)):
            for j, a in enumerate(alphas):
                spec = LatticeSpec(d, (3,) * d, a)
                p = ModelParams(build_coupling_table(spec), beta=beta)
                grid[i, j] = dobrushin_certificate(p, spec, 4, cutoff=200).q_threshold
        assert np.all(np.diff(grid, axis=0) > 0)
        assert np.all(np.diff(grid, axis=1) < 0)


def test_certificate_serialises():
    spec = LatticeSpec(1, (3,), 1.5)
    d = dobrushin_certificate(params_d1(1.0), spec, 17).to_dict()
    assert {"q_threshold", "pair_bound_sum", "passes", "cutoff", "tail_bound"} <= d.keys()
