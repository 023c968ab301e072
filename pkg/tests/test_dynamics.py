import math

import numpy as np
import pytest
from scipy import integrate, stats

from xyorbit import dynamics
from xyorbit.discretization import enumerate_states
from xyorbit.dynamics import (BoundViolation, FieldSchedule,
                              build_generator_matrix, build_kernel_matrix,
                              heat_bath_conditional, is_strongly_connected,
                              reversible_kernel_step, simulate, stationary_distribution,
                              time_ordered_propagator, transient_distribution)
from xyorbit.gibbs import BudgetError, conditional_labels, discrete_marginal
from xyorbit.model import ModelParams
from xyorbit.rates import rate_quadrature

from conftest import make_params, ring

TWO_PI = 2 * math.pi


def tv(a, b):
    return 0.5 * float(np.abs(np.asarray(a) - np.asarray(b)).sum())


def test_beta0_single_site_cyclic():
    G = build_generator_matrix(ModelParams(ring(1), beta=0.0, q=4), 16).matrix
    c = 4 / TWO_PI
    expected = c * (np.roll(np.eye(4), 1, axis=1) - np.eye(4))
    np.testing.assert_allclose(G, expected, atol=1e-14)


@pytest.mark.parametrize("kw", [dict(beta=0.3), dict(beta=0.9, h=0.4, theta=2.0),
                                dict(beta=0.5, q=3)])
def test_generator_structure(kw):
    G = build_generator_matrix(make_params(**kw), 32)
    m = G.matrix
    assert np.abs(m.sum(axis=1)).max() <= 1e-12
    off = m - np.diag(np.diag(m))
    assert off.min() >= 0
    # exactly N positive off-diagonals per row: one rotation per site
    assert np.all((off > 0).sum(axis=1) == 3)


def test_generator_entries_match_rate_quadrature(rng):
    p = make_params(beta=0.7, h=0.3, theta=1.1)
    G = build_generator_matrix(p, 48)
    for st in enumerate_states(3, 4)[rng.choice(64, 8, replace=False)]:
        for x in range(3):
            assert G.rate(st, x) == pytest.approx(rate_quadrature(st, x, p, 48).value,
                                                  rel=1e-12)


def test_strongly_connected():
    for kw in (dict(beta=0.3), dict(beta=1.0, q=3), dict(n=2, beta=2.0, q=5)):
        assert is_strongly_connected(build_generator_matrix(make_params(**kw), 16))


def test_generator_budget():
    with pytest.raises(BudgetError):
        build_generator_matrix(make_params(n=5, q=6), 8)


def test_transient_distribution():
    G = build_generator_matrix(make_params(beta=0.5, h=0.2), 32)
    p0 = np.zeros(64)
    p0[0] = 1.0
    assert np.array_equal(transient_distribution(G, p0, 0.0), p0)
    a = transient_distribution(G, p0, 0.7)
    b = transient_distribution(G, transient_distribution(G, p0, 0.3), 0.4)
    assert tv(a, b) <= 1e-10
    gap = np.sort(-np.linalg.eigvals(G.matrix).real)[1]
    far = transient_distribution(G, p0, 50 / gap)
    assert tv(far, stationary_distribution(G)) <= 1e-8
    with pytest.raises(ValueError):
        transient_distribution(G, p0, -1.0)


def test_time_ordered_propagator_matches_ode():
    p = make_params(n=2, beta=0.5, q=3, h=0.4)
    gen = lambda t: build_generator_matrix(p.with_theta(t), 32).matrix
    S = 9
    P = time_ordered_propagator(gen, 0.2, 1.0, 40)

    def rhs(t, y):
        return (y.reshape(S, S) @ gen(t)).ravel()

    sol = integrate.solve_ivp(rhs, (0.2, 1.0), np.eye(S).ravel(), rtol=1e-11, atol=1e-13,
                              method="DOP853")
    np.testing.assert_allclose(P, sol.y[:, -1].reshape(S, S), atol=1e-9)


def test_time_ordered_constant_generator_is_expm():
    from scipy.linalg import expm
    G = build_generator_matrix(make_params(beta=0.4), 16).matrix
    np.testing.assert_allclose(time_ordered_propagator(lambda t: G, 0.0, 0.8, 3),
                               expm(0.8 * G), atol=1e-12)


def test_kernel_beta0_uniform(rng):
    p = ModelParams(ring(3), beta=0.0, q=4)
    np.testing.assert_allclose(heat_bath_conditional([1, 2, 3], 1, p, 16), 0.25, atol=1e-14)
    draws = np.array([reversible_kernel_step([1, 2, 3], 1, p, 8, rng)[1] for _ in range(2000)])
    counts = np.bincount(draws, minlength=5)[1:]
    assert stats.chisquare(counts).pvalue > 0.01


def test_kernel_conditional_matches_marginal():
    p = make_params(beta=0.8, h=0.3, theta=0.5)
    m = discrete_marginal(p, 48)
    for st in ([1, 1, 1], [2, 4, 3]):
        for x in range(3):
            np.testing.assert_allclose(heat_bath_conditional(st, x, p, 48),
                                       conditional_labels(m, st, x), atol=1e-12)


def test_kernel_detailed_balance():
    p = make_params(n=2, beta=0.6, q=4)
    mu = discrete_marginal(p, 48).reshape(-1)
    K = build_kernel_matrix(p, 48).matrix
    flow = mu[:, None] * K
    np.fill_diagonal(flow, 0)
    assert np.abs(flow - flow.T).max() <= 1e-10


def test_events_well_formed(rng):
    p = make_params(beta=0.5, h=0.3)
    tr = simulate([1, 2, 3], 30.0, p, "quadrature", FieldSchedule(0.0, 1.0), rng,
                  snapshot_dt=1.0)
    times = [e.time for e in tr.events]
    assert all(a < b for a, b in zip(times, times[1:]))
    state = tr.initial.copy()
    for e in tr.events:
        assert e.kind == "rotation" and e.old_label == state[e.site]
        assert e.new_label == e.old_label % 4 + 1
        state[e.site] = e.new_label
    np.testing.assert_array_equal(state, tr.final)
    assert len(tr.snapshots) == 31 and tr.snapshot_times[-1] == pytest.approx(30.0)


def test_beta0_event_counts_poisson():
    p = ModelParams(ring(3), beta=0.0, q=4)
    G = build_generator_matrix(p, 16)
    T = 10.0
    counts = []
    for k in range(200):
        tr = simulate([1, 1, 1], T, p, "quadrature", None, np.random.default_rng([7, k]),
                      generator=G)
        counts.append(np.bincount([e.site for e in tr.events], minlength=3))
    counts = np.array(counts)[:, 0]
    mean = T * 4 / TWO_PI
    edges = [0, 3, 4, 5, 6, 7, 8, 9, 10, np.inf]
    obs = np.array([np.sum((counts >= a) & (counts < b)) for a, b in zip(edges, edges[1:])])
    cdf = stats.poisson.cdf(np.array(edges[1:]) - 1, mean)
    exp = 200 * np.diff(np.concatenate([[0.0], cdf]))
    assert stats.chisquare(obs, exp).pvalue > 0.01


def test_beta0_long_run_uniform():
    p = ModelParams(ring(3), beta=0.0, q=4)
    G = build_generator_matrix(p, 16)
    final = np.array([simulate([1, 1, 1], 50.0, p, "quadrature", None,
                               np.random.default_rng([8, k]), generator=G).final
                      for k in range(300)]).ravel()
    counts = np.bincount(final, minlength=5)[1:]
    se = math.sqrt(len(final) * 0.25 * 0.75)
    assert np.all(np.abs(counts - len(final) / 4) <= 3 * se)


def test_bound_violation_is_fatal(monkeypatch, rng):
    p = make_params(beta=0.5)
    monkeypatch.setattr(dynamics, "rate_envelope", lambda params: np.full(3, 1e-3))
    with pytest.raises(BoundViolation):
        simulate([1, 1, 1], 5e4, p, "quadrature", None, rng)
    with pytest.raises(BoundViolation):
        simulate([1, 1, 1], 5e4, p, "monte_carlo", None, rng)


def test_simulate_validation(rng):
    p = make_params()
    with pytest.raises(ValueError):
        simulate([1, 1, 1], 0.0, p, "quadrature", None, rng)
    with pytest.raises(ValueError):
        simulate([1, 1, 1], 1.0, p, "exact", None, rng)


def occupancy_stats(params, initial_dist, T, replicas, seed, **kw):
    """Per-state mean occupancy and standard error over independent replicas."""
    states = enumerate_states(params.n_sites, params.q)
    occ = []
    for k in range(replicas):
        r = np.random.default_rng([seed, k])
        start = states[r.choice(len(states), p=initial_dist)]
        tr = simulate(start, T, params, rng=r, **kw)
        occ.append(tr.occupancy(params.q))
    occ = np.array(occ)
    return occ.mean(axis=0), occ.std(axis=0, ddof=1) / math.sqrt(replicas)


def test_mc_mode_occupancy_close_to_generator():
    p = make_params(n=2, beta=0.5, q=4)
    pi = stationary_distribution(build_generator_matrix(p, 48))
    mean, se = occupancy_stats(p, pi, 200.0, 40, 11, rate_mode="monte_carlo")
    assert np.all(np.abs(mean - pi) <= 4 * se)


def test_combined_kernel_occupancy():
    p = make_params(n=2, beta=0.4, q=3)
    G = build_generator_matrix(p, 48) + build_kernel_matrix(p, 48, 1.0)
    pi = stationary_distribution(G)
    np.testing.assert_allclose(pi, discrete_marginal(p, 48).reshape(-1), atol=1e-12)
    mean, se = occupancy_stats(p, pi, 200.0, 40, 12, rate_mode="quadrature", kernel_rate=1.0)
    assert np.all(np.abs(mean - pi) <= 3 * se)


def test_rotating_field_is_periodic():
    # per-replica time fractions per label over the 2nd and 3rd periods
    p = make_params(n=1, beta=0.8, q=4, h=0.8)
    sched = FieldSchedule(0.0, 1.0)
    diffs = []
    for k in range(150):
        tr = simulate([1], 3 * TWO_PI, p, "quadrature", sched, np.random.default_rng([9, k]),
                      snapshot_dt=TWO_PI / 200)
        lab = tr.snapshots[:, 0]
        per1 = np.bincount(lab[200:400], minlength=5)[1:] / 200
        per2 = np.bincount(lab[400:600], minlength=5)[1:] / 200
        diffs.append(per1 - per2)
    diffs = np.array(diffs)
    se = diffs.std(axis=0, ddof=1) / math.sqrt(len(diffs))
    assert np.all(np.abs(diffs.mean(axis=0)) <= 3 * se)
