"""Independent scalar (single-copy) spherical-model implementations.

Everything here works with plain floats and scipy.integrate.quad on the
one-dimensional model with the identity overlap path, written separately
from the package so it can serve as an oracle for the matrix code at
m = 1. Discrete closed forms are cross-validated against the quadrature
forms inside the test suite itself.
"""

from __future__ import annotations

import math

from scipy.integrate import quad

_QUAD = dict(epsabs=1e-13, epsrel=1e-13, limit=400)


def xi(coeffs, s: float, order: int = 0) -> float:
    """sum_p b_p^2 s^p and its derivatives; coeffs is [(p, b_p), ...]."""
    total = 0.0
    for p, b in coeffs:
        if p - order < 0:
            continue
        total += math.perm(p, order) * b * b * s ** (p - order)
    return total


def theta(coeffs, s: float) -> float:
    """s xi'(s) - xi(s)."""
    return s * xi(coeffs, s, 1) - xi(coeffs, s)


def step_value(knots, vals, t: float) -> float:
    """Right-continuous step function given by knots/values."""
    out = vals[0]
    for k, v in zip(knots, vals):
        if t >= k - 1e-15:
            out = v
    return out


# -- discrete forms ---------------------------------------------------------


def discrete_cs(coeffs, h: float, xs, qs) -> float:
    """Scalar discrete Crisanti-Sommers value; xs = (x_0..x_{r-1}),
    qs = (q_1..q_r) with q_r the constraint."""
    r = len(xs)
    q_all = [0.0] + list(qs)
    d = {}
    acc = 0.0
    for k in range(r - 1, 0, -1):
        acc += xs[k] * (q_all[k + 1] - q_all[k])
        d[k] = acc
    val = h * h * d[1]
    val += math.log(q_all[r] - q_all[r - 1]) / xs[r - 1]
    for k in range(1, r - 1):
        val -= math.log(d[k + 1] / d[k]) / xs[k]
    val += q_all[1] / d[1]
    for k in range(1, r):
        val += xs[k] * (xi(coeffs, q_all[k + 1]) - xi(coeffs, q_all[k]))
    return 0.5 * val


def discrete_parisi(coeffs, h: float, xs, qs, lam: float) -> float:
    """Scalar discrete Parisi value with multiplier lam; the log-ratio
    telescoping carries 1/x_k, matching the continuous form below."""
    r = len(xs)
    q_all = [0.0] + list(qs)
    lams = {r: lam}
    acc = 0.0
    for k in range(r - 1, 0, -1):
        acc += xs[k] * (xi(coeffs, q_all[k + 1], 1) - xi(coeffs, q_all[k], 1))
        lams[k] = lam - acc
    val = h * h / lams[1] + lam * q_all[r] - 1.0 - math.log(lam)
    for k in range(1, r):
        val += math.log(lams[k + 1] / lams[k]) / xs[k]
    val += xi(coeffs, q_all[1], 1) / lams[1]
    for k in range(1, r):
        val -= xs[k] * (theta(coeffs, q_all[k + 1]) - theta(coeffs, q_all[k]))
    return 0.5 * val


# -- continuous forms via quadrature, identity path Phi(t) = t ---------------


def _x_hat(knots, vals, t: float, t_end: float = 1.0) -> float:
    """int_t^1 x(s) ds for the step function."""
    total = 0.0
    pts = list(knots) + [t_end]
    for lo, hi, v in zip(pts[:-1], pts[1:], vals):
        a, b = max(lo, t), hi
        if b > a:
            total += v * (b - a)
    return total


def continuous_cs(coeffs, h: float, knots, vals, t_hat: float) -> float:
    """Quadrature of the scalar continuous Crisanti-Sommers form."""
    pts = sorted({float(k) for k in knots} | {t_hat})
    inner = [p for p in pts if 0.0 < p < 1.0]

    def f1(t):
        return step_value(knots, vals, t) * (xi(coeffs, t, 1) + h * h)

    i1 = quad(f1, 0.0, 1.0, points=inner, **_QUAD)[0]
    i2 = math.log(1.0 - t_hat)

    def f3(t):
        return 1.0 / _x_hat(knots, vals, t)

    inner3 = [p for p in inner if p < t_hat]
    i3 = quad(f3, 0.0, t_hat, points=inner3, **_QUAD)[0]
    return 0.5 * (i1 + i2 + i3)


def continuous_parisi(coeffs, h: float, knots, vals, lam: float) -> float:
    """Quadrature of the scalar continuous Parisi form."""
    pts = [p for p in sorted({float(k) for k in knots}) if 0.0 < p < 1.0]

    def dfun(t):
        total = 0.0
        all_pts = list(knots) + [1.0]
        for lo, hi, v in zip(all_pts[:-1], all_pts[1:], vals):
            a = max(lo, t)
            if hi > a:
                total += v * (xi(coeffs, hi, 1) - xi(coeffs, a, 1))
        return total

    def f1(t):
        return xi(coeffs, t, 2) / (lam - dfun(t))

    i1 = quad(f1, 0.0, 1.0, points=pts, **_QUAD)[0]
    i2 = h * h / (lam - dfun(0.0))

    def f3(t):
        return step_value(knots, vals, t) * t * xi(coeffs, t, 2)

    i3 = -quad(f3, 0.0, 1.0, points=pts, **_QUAD)[0]
    i4 = lam * 1.0 - 1.0 - math.log(lam)
    return 0.5 * (i1 + i2 + i3 + i4)


def gse_value(coeffs, h: float, l_val: float, a_knots, a_vals) -> float:
    """Scalar zero-temperature functional for a step density alpha and the
    identity path on [0, 1]."""
    pts = [p for p in sorted({float(k) for k in a_knots}) if 0.0 < p < 1.0]

    def a_run(t):
        total = 0.0
        all_pts = list(a_knots) + [1.0]
        for lo, hi, v in zip(all_pts[:-1], all_pts[1:], a_vals):
            b = min(hi, t)
            if b > lo:
                total += v * (b - lo)
        return total

    i1 = (xi(coeffs, 1.0, 1) + h * h) * l_val
    i2 = quad(lambda t: 1.0 / (l_val - a_run(t)), 0.0, 1.0, points=pts, **_QUAD)[0]
    i3 = -quad(lambda t: xi(coeffs, t, 2) * a_run(t), 0.0, 1.0, points=pts, **_QUAD)[0]
    return 0.5 * (i1 + i2 + i3)


# -- replica-symmetric references --------------------------------------------


def rs_cs_value(coeffs, h: float, q: float) -> float:
    """Single-atom Crisanti-Sommers value (x jumps to 1 at q)."""
    return discrete_cs(coeffs, h, [0.0, 1.0], [q, 1.0])


def rs_optimal_q(coeffs, h: float) -> float:
    """Minimizing atom location by golden-section on [0, 1)."""
    lo, hi = 0.0, 1.0 - 1e-9
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - phi * (b - a), a + phi * (b - a)
    fc, fd = rs_cs_value(coeffs, h, c), rs_cs_value(coeffs, h, d)
    for _ in range(200):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = rs_cs_value(coeffs, h, c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = rs_cs_value(coeffs, h, d)
    return 0.5 * (a + b)


def rs_gse(coeffs, h: float) -> float:
    """Replica-symmetric ground state value sqrt(xi'(1) + h^2) ... times 2/2."""
    return math.sqrt(xi(coeffs, 1.0, 1) + h * h)
