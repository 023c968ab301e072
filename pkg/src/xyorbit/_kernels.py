"""Compiled inner loops: exact single-site heat-bath on arcs.

The conditional law of one spin is ``exp(a cos u + b sin u)`` restricted to
an arc ``[lo, lo + w)``. It is sampled exactly by rejection from the uniform
proposal with the envelope ``exp(max over the arc)``.
"""

import math

import numba
import numpy as np

TWO_PI = 2.0 * math.pi


@numba.njit(cache=True)
def arc_max(a, b, lo, w):
    """Maximum of a cos u + b sin u over the closed arc [lo, lo + w]."""
    r = math.hypot(a, b)
    if r == 0.0:
        return 0.0
    psi = math.atan2(b, a)
    d = (psi - lo) % TWO_PI
    if d <= w:
        return r
    e0 = a * math.cos(lo) + b * math.sin(lo)
    e1 = a * math.cos(lo + w) + b * math.sin(lo + w)
    return max(e0, e1)


@numba.njit(cache=True)
def sample_arc(a, b, lo, w, rng, max_tries):
    """One exact draw from exp(a cos u + b sin u) on [lo, lo + w).

    Returns -1.0 when ``max_tries`` proposals were all rejected.
    """
    emax = arc_max(a, b, lo, w)
    for _ in range(max_tries):
        u = lo + w * rng.random()
        if u >= lo + w:
            continue
        e = a * math.cos(u) + b * math.sin(u)
        if math.log(1.0 - rng.random()) <= e - emax:
            if u >= TWO_PI:
                u -= TWO_PI
            return u
    return -1.0


@numba.njit(cache=True)
def site_field(phi_row, J, hx, beta, cos_t, sin_t, x):
    a = hx[x] * cos_t
    b = hx[x] * sin_t
    for y in range(phi_row.shape[0]):
        jxy = J[x, y]
        if jxy != 0.0:
            a += jxy * math.cos(phi_row[y])
            b += jxy * math.sin(phi_row[y])
    return beta * a, beta * b


@numba.njit(cache=True)
def heatbath_sweeps(phi, J, hx, beta, theta, lo, width, order, sweeps, rng, max_tries):
    """In-place systematic-scan heat-bath on a batch ``phi`` of shape (B, N).

    ``J`` already carries the coupling sign and has zero rows and columns for
    excluded sites. Returns the number of failed site updates.
    """
    cos_t = math.cos(theta)
    sin_t = math.sin(theta)
    failures = 0
    for c in range(phi.shape[0]):
        row = phi[c]
        for _ in range(sweeps):
            for k in range(order.shape[0]):
                x = order[k]
                a, b = site_field(row, J, hx, beta, cos_t, sin_t, x)
                u = sample_arc(a, b, lo[c, x], width[c, x], rng, max_tries)
                if u < 0.0:
                    failures += 1
                else:
                    row[x] = u
    return failures


@numba.njit(cache=True)
def exit_ratio(phi_row, J, hx, beta, theta, x, lo, w, gl_nodes, gl_weights):
    """exp(-H_x(lo + w)) / int_lo^{lo+w} exp(-H_x(u)) du at fixed neighbours.

    The common factor exp(-max) is divided out of both terms.
    """
    a, b = site_field(phi_row, J, hx, beta, math.cos(theta), math.sin(theta), x)
    emax = arc_max(a, b, lo, w)
    r = lo + w
    num = math.exp(a * math.cos(r) + b * math.sin(r) - emax)
    den = 0.0
    for i in range(gl_nodes.shape[0]):
        u = lo + 0.5 * w * (gl_nodes[i] + 1.0)
        den += gl_weights[i] * math.exp(a * math.cos(u) + b * math.sin(u) - emax)
    den *= 0.5 * w
    return num / den


def gl_rule(M: int):
    nodes, weights = np.polynomial.legendre.leggauss(M)
    return nodes, weights
