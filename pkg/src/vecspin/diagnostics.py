"""Optimality and structure diagnostics for order parameters.

Every characterization of a minimizer is exposed as a checkable residual:
the finite-temperature critical-point equation along the path, the induced
measure of the minimizer, replica-symmetry criteria, the zero-temperature
stationarity system with its g-function, the isolation/convexity
quantities governing the support structure, and a fully constructed
full-RSB instance on two coupled copies of a cosh-type model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BetaTooSmall,
    DegenerateDerivative,
    RootNotBracketed,
    SingularPath,
)
from .functionals import (
    MatrixPath,
    MeasureFn,
    ZeroTempTriple,
    _Grid,
    _stack_inv_pd,
    _xi_stack,
    alpha_weighted_increment,
    continuous_cs,
    linear_path,
)
from .linalg import (
    frob_ip,
    fro_norm,
    hadamard_pow,
    min_eig,
    sym_inv,
    sym_power,
    sym_sqrt,
    symmetrize,
)
from .model import MixedModel, cosh_model, model_to_dict

__all__ = [
    "OptimalityReport",
    "critical_residual",
    "parisi_density",
    "parisi_density_from_measure",
    "rs_condition",
    "zero_temp_g",
    "sk_isolation_check",
    "convexity_profile",
    "rsb_example_build",
]


@dataclass
class OptimalityReport:
    """Grid evaluation of an optimality system.

    `per_point_residuals` holds (t, residual) pairs for the scalar residual
    whose in-support supremum is `residual_sup`; `support_grid` classifies
    the same grid points as in/out of the detected support. Additional
    matrix-level diagnostics live in `extras`.
    """

    residual_sup: float
    support_grid: list[tuple[float, bool]]
    per_point_residuals: list[tuple[float, float]]
    verdict: str
    tolerance: float
    extras: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return {
            "residual_sup": self.residual_sup,
            "support_grid": [[t, bool(s)] for t, s in self.support_grid],
            "per_point_residuals": [[t, r] for t, r in self.per_point_residuals],
            "verdict": self.verdict,
            "tolerance": self.tolerance,
            "extras": {
                k: v for k, v in self.extras.items() if not isinstance(v, np.ndarray)
            },
        }


#: below this level the resolvent-difference quotient loses precision to
#: cancellation and the constant-resolvent panel formula is more accurate
_MVAL_FLOOR = 1e-8


def _resolvent_panel_increments(inv_nodes, mval, dphi_gap):
    """Exact panel integrals of B^{-1} Phi' B^{-1} when B' = -mval Phi'.

    For mval > 0 the integrand is (1/mval) d/dt B^{-1}; for vanishing mval
    the resolvent is constant on the panel.
    """
    if mval > _MVAL_FLOOR:
        return (inv_nodes[1:] - inv_nodes[:-1]) / mval
    return inv_nodes[:-1] @ dphi_gap @ inv_nodes[:-1]


def critical_residual(
    model: MixedModel,
    x: MeasureFn,
    path: MatrixPath,
    support_tol: float = 1e-8,
    n_quad: int = 2001,
    residual_tol: float = 1e-5,
) -> OptimalityReport:
    """Residual of the finite-temperature critical-point equation

        R(t) = xi'(Phi(t)) + hh^T - int_0^t hatPhi^{-1} Phi' hatPhi^{-1} ds

    on the detected support of the measure. The reported residual is the
    first-variation pairing <R(t), Phi'(t)> (which a minimizer must
    annihilate along the path direction); the Frobenius norm of the matrix
    residual is attached in extras for diagnosis.

    Support detection: a grid point is in-support when the measure rises
    across a one-grid-step window by more than `support_tol`; knot atoms
    always count.
    """
    grid = _Grid(path, x, n_quad=n_quad)
    hat_tables, _ = grid.measure_path_suffix()
    hh = model.field_outer()

    # classify support and find how far the running integral is needed
    records: list[tuple[float, bool, np.ndarray, np.ndarray]] = []
    t_sup_max = 0.0
    node_meta = []
    for bi, b in enumerate(grid.blocks):
        start = 1 if bi > 0 else 0
        for i in range(start, b.n + 1):
            t = float(b.tn[i])
            delta = b.delta
            rise = x.value(t + delta) - x.value(t - delta)
            in_sup = rise > support_tol
            if in_sup:
                t_sup_max = max(t_sup_max, t)
            node_meta.append((bi, i, t, in_sup))

    # accumulate K(t) = int_0^t hatPhi^{-1} Phi' hatPhi^{-1} until PD fails
    m = path.m_dim
    k_tables: list[np.ndarray | None] = []
    offset = np.zeros((m, m))
    cut_t = path.t_end
    for b, hat in zip(grid.blocks, hat_tables):
        w = np.linalg.eigvalsh(hat)
        scale = 1.0 + np.linalg.norm(hat, axis=(1, 2))
        if np.any(w[:, 0] <= 1e-12 * scale):
            cut_t = b.t0
            k_tables.append(None)
            break
        inv = _stack_inv_pd(hat, SingularPath, "hat{Phi}")
        gap = b.phi_n[1:] - b.phi_n[:-1]
        inc = _resolvent_panel_increments(inv, b.mval, gap)
        tbl = np.concatenate([offset[None], offset[None] + np.cumsum(inc, axis=0)])
        k_tables.append(tbl)
        offset = tbl[-1]
    k_tables.extend([None] * (len(grid.blocks) - len(k_tables)))
    if cut_t < t_sup_max - 1e-12:
        raise SingularPath(
            f"hat{{Phi}} loses positive definiteness at t={cut_t:.6g}, "
            f"inside the detected support (up to t={t_sup_max:.6g})"
        )

    support_grid = []
    pairs = []
    fro_list = []
    sup = 0.0
    mat_sup = 0.0
    for bi, i, t, in_sup in node_meta:
        support_grid.append((t, in_sup))
        tbl = k_tables[bi]
        if tbl is None:
            continue
        b = grid.blocks[bi]
        resid = _xi_stack(model, b.phi_n[i][None], 1)[0] + hh - tbl[i]
        f_val = frob_ip(resid, b.dphi_n[i])
        pairs.append((t, abs(f_val)))
        fro_list.append((t, fro_norm(resid)))
        if in_sup:
            sup = max(sup, abs(f_val))
            mat_sup = max(mat_sup, fro_norm(resid))
    verdict = "pass" if sup <= residual_tol else "fail"
    return OptimalityReport(
        residual_sup=sup,
        support_grid=support_grid,
        per_point_residuals=pairs,
        verdict=verdict,
        tolerance=residual_tol,
        extras={
            "matrix_residual_sup": mat_sup,
            "matrix_residual_fro": fro_list,
            "pd_cut": cut_t,
        },
    )


def parisi_density(model: MixedModel, path: MatrixPath, u: float) -> float:
    """Induced-measure mass mu([0, u]) from the spectral form

        <xi'''(Phi(u)), Phi'(u)^{.3}>
        / ( 2 trace( (Phi'(u)^{1/2} (xi''(Phi(u)) .* Phi'(u)) Phi'(u)^{1/2})^{3/2} ) ).

    Valid on intervals interior to the support of a minimizer where the
    full matrix critical-point system holds.
    """
    dphi = path.dphi(u)
    phi = path.phi(u)
    half = sym_sqrt(dphi)
    core = symmetrize(half @ (model.xi(phi, 2) * dphi) @ half)
    den = 2.0 * float(np.trace(sym_power(core, 1.5)))
    if abs(den) < 1e-14:
        raise DegenerateDerivative(
            f"denominator underflow ({den:.3e}) at u={u}; the path derivative "
            "or curvature is degenerate there"
        )
    num = frob_ip(model.xi(phi, 3), hadamard_pow(dphi, 3))
    return num / den


def parisi_density_from_measure(
    model: MixedModel, x: MeasureFn, path: MatrixPath, u: float
) -> float:
    """Induced-measure mass mu([0, u]) in the resolvent form

        <xi'''(Phi(u)), Phi'(u)^{.3}> / ( 2 trace( (hatPhi(u)^{-1} Phi'(u))^3 ) ),

    which only uses the paired (first-variation) stationarity along the
    path and therefore also applies to constructions that are stationary
    in the path direction without solving the full matrix system.
    """
    total = alpha_weighted_increment(path, x)
    upto = alpha_weighted_increment(path, x, upto=u)
    hat = total - upto
    if min_eig(hat) <= 1e-12 * (1.0 + fro_norm(hat)):
        raise SingularPath(f"hat{{Phi}}({u}) is singular")
    b = sym_inv(hat) @ path.dphi(u)
    den = 2.0 * float(np.trace(b @ b @ b))
    if abs(den) < 1e-14:
        raise DegenerateDerivative(f"denominator underflow ({den:.3e}) at u={u}")
    num = frob_ip(model.xi(path.phi(u), 3), hadamard_pow(path.dphi(u), 3))
    return num / den


def rs_condition(
    model: MixedModel, q: np.ndarray, ordering: str = "loewner"
) -> tuple[bool, float]:
    """Zero-temperature replica-symmetry criterion
    xi'(Q) + hh^T >= xi''(Q) .* Q.

    `ordering` picks the reading of the inequality: "loewner" (PSD order,
    default) returns the smallest eigenvalue of the gap; "entrywise"
    returns the smallest entry. Flag is margin >= -1e-10.
    """
    q = symmetrize(np.asarray(q, dtype=float))
    gap = model.xi(q, 1) + model.field_outer() - model.xi(q, 2) * q
    if ordering == "loewner":
        margin = min_eig(gap)
    elif ordering == "entrywise":
        margin = float(gap.min())
    else:
        raise ValueError(f"unknown ordering {ordering!r}")
    return margin >= -1e-10, margin


def zero_temp_g(
    model: MixedModel,
    triple: ZeroTempTriple,
    g_tol: float | None = None,
    n_quad: int = 2001,
    stationarity_tol: float = 1e-8,
) -> OptimalityReport:
    """Zero-temperature optimality system for a feasible triple.

    With Z(t) = (L - int_0^t alpha dPhi)^{-1}, checks

    * stationarity: xi'(Q) + hh^T = int_0^m Z Phi' Z dt (Frobenius residual),
    * the function g(t) = int_t^m <Phi'(s), barG(s)> ds with
      barG(s) = xi'(Phi(s)) - int_0^s Z Phi' Z dq stays nonnegative,
    * the measure support condition: the total alpha-increase at points
      with |g| > g_tol is at most 1e-6.

    The report's residual_sup is the stationarity residual; per-point
    records carry g(t).
    """
    path, alpha = triple.path, triple.alpha
    grid = _Grid(path, alpha, n_quad=n_quad)
    a_tables, _ = grid.measure_path_prefix()
    hh = model.field_outer()
    m = path.m_dim
    q = path.endpoint

    k_offset = np.zeros((m, m))
    g_contrib: list[np.ndarray] = []
    gbar_nodes: list[np.ndarray] = []
    for b, a_tbl in zip(grid.blocks, a_tables):
        z_nodes = _stack_inv_pd(triple.L[None] - a_tbl, SingularPath, "L - A(t)")
        tm = 0.5 * (b.tn[:-1] + b.tn[1:])
        phi_m = b.seg.phi(tm)
        dphi_m = b.seg.dphi(tm)
        a_mid = a_tbl[:-1] + b.mval * (phi_m - b.phi_n[:-1])
        z_mid = _stack_inv_pd(triple.L[None] - a_mid, SingularPath, "L - A(t)")
        gap = b.phi_n[1:] - b.phi_n[:-1]
        inc = _resolvent_panel_increments(z_nodes, b.mval, gap)
        k_nodes = np.concatenate(
            [k_offset[None], k_offset[None] + np.cumsum(inc, axis=0)]
        )
        if b.mval > _MVAL_FLOOR:
            k_mid = k_nodes[:-1] + (z_mid - z_nodes[:-1]) / b.mval
        else:
            k_mid = k_nodes[:-1] + z_nodes[:-1] @ (phi_m - b.phi_n[:-1]) @ z_nodes[:-1]
        k_offset = k_nodes[-1]
        bar_n = _xi_stack(model, b.phi_n, 1) - k_nodes
        bar_m = _xi_stack(model, phi_m, 1) - k_mid
        gb_n = np.einsum("nij,nij->n", b.dphi_n, bar_n)
        gb_m = np.einsum("nij,nij->n", dphi_m, bar_m)
        gbar_nodes.append(gb_n)
        g_contrib.append((b.delta / 6.0) * (gb_n[:-1] + 4.0 * gb_m + gb_n[1:]))

    stationarity = fro_norm(model.xi(q, 1) + hh - k_offset)
    total_g = float(sum(c.sum() for c in g_contrib))
    g_records: list[tuple[float, float]] = []
    support_grid: list[tuple[float, bool]] = []
    running = 0.0
    g_min = math.inf
    for bi, (b, contrib) in enumerate(zip(grid.blocks, g_contrib)):
        start = 1 if bi > 0 else 0
        cums = np.concatenate([[running], running + np.cumsum(contrib)])
        for i in range(start, b.n + 1):
            t = float(b.tn[i])
            g_val = total_g - float(cums[i])
            g_records.append((t, g_val))
            g_min = min(g_min, g_val)
            support_grid.append((t, alpha.increases_near(t, width=b.delta)))
        running = float(cums[-1])

    value_scale = abs(
        0.5 * frob_ip(model.xi(q, 1) + hh, triple.L)
    )  # coarse magnitude of the functional for the default tolerance
    if g_tol is None:
        g_tol = 1e-6 * (1.0 + value_scale)
    off_mass = 0.0
    g_lookup = dict(g_records)
    prev_v = 0.0
    for t, v in zip(alpha.ts, alpha.vs):
        jump = v - prev_v
        prev_v = v
        if jump <= 0:
            continue
        g_here = g_lookup.get(float(t))
        if g_here is None:
            idx = int(np.argmin([abs(tt - t) for tt, _ in g_records]))
            g_here = g_records[idx][1]
        if abs(g_here) > g_tol:
            off_mass += jump

    ok = stationarity <= stationarity_tol and g_min >= -g_tol and off_mass <= 1e-6
    return OptimalityReport(
        residual_sup=stationarity,
        support_grid=support_grid,
        per_point_residuals=g_records,
        verdict="pass" if ok else "fail",
        tolerance=stationarity_tol,
        extras={
            "stationarity_residual": stationarity,
            "g_min": g_min,
            "g_tol": g_tol,
            "alpha_mass_off_support": off_mass,
        },
    )


def sk_isolation_check(
    model: MixedModel, x: MeasureFn, path: MatrixPath
) -> tuple[float, float]:
    """Both sides of the pair-spin isolation criterion at t = 0:

        lhs = 2 <beta_2 x beta_2, Phi'(0)^{.2}>,
        rhs = <hatPhi(0)^{-1} Phi'(0), hatPhi(0)^{-1} Phi'(0)>.

    Reported for inspection; equality is necessary for 0 to be a
    non-isolated support point.
    """
    beta2 = model.beta_of(2)
    dphi0 = path.dphi(0.0)
    lhs = 2.0 * frob_ip(np.outer(beta2, beta2), hadamard_pow(dphi0, 2))
    hat0 = alpha_weighted_increment(path, x)
    if min_eig(hat0) <= 1e-12 * (1.0 + fro_norm(hat0)):
        raise SingularPath("hat{Phi}(0) is singular")
    b = sym_inv(hat0) @ dphi0
    rhs = frob_ip(b, b)
    return lhs, rhs


def convexity_profile(
    model: MixedModel,
    path: MatrixPath,
    interval: tuple[float, float],
    n_samples: int = 41,
) -> list[dict]:
    """Samples y(u) = <xi''(Phi(u)), Phi'(u)^{.2}>^{-1/2} and its second
    central difference on the interval; the sign of y'' decides whether the
    support can host more than two consecutive isolated points."""
    lo, hi = float(interval[0]), float(interval[1])
    us = np.linspace(lo, hi, max(int(n_samples), 5))
    ys = np.empty_like(us)
    for i, u in enumerate(us):
        c = frob_ip(model.xi(path.phi(u), 2), hadamard_pow(path.dphi(u), 2))
        if c < 1e-14:
            raise DegenerateDerivative(f"curvature underflow at u={u}")
        ys[i] = c ** (-0.5)
    h = us[1] - us[0]
    out = []
    for i in range(1, len(us) - 1):
        ypp = (ys[i + 1] - 2.0 * ys[i] + ys[i - 1]) / h**2
        out.append(
            {
                "u": float(us[i]),
                "y": float(ys[i]),
                "y_second": float(ypp),
                "convex": bool(ypp >= -1e-8 * (1.0 + abs(ys[i]))),
            }
        )
    return out


# ---------------------------------------------------------------------------
# full-RSB construction on two coupled copies
# ---------------------------------------------------------------------------

_RSB_Q = np.array([[1.0, 0.1], [0.1, 1.0]])


def rsb_example_build(
    beta: float,
    n_steps: int = 4000,
    truncation_order: int = 16,
    residual_tol: float = 1e-5,
) -> tuple[MeasureFn, MatrixPath, float, OptimalityReport]:
    """Construct the full-RSB minimizer candidate of the two-copy cosh model.

    The constraint is Q = [[1, 0.1], [0.1, 1]], the covariance is
    (beta x beta) .* (cosh(A) - E), the path is Phi(q) = (q/2) Q, and with
    phi(q) = <xi''(Phi(q)), Phi'(q)^{.2}>^{-1/2} the measure is

        x(q) = -sqrt(2) phi'(q)  on [0, q0],   x = 1 beyond q0,

    where q0 uniquely solves phi(q0) = (2 - q0)/sqrt(2). The continuous
    piece is discretized into `n_steps` midpoint-valued steps.

    Returns (measure, path, q0, report); the report carries the
    critical-point residual on [0, q0] plus, in extras, the residual of the
    identity hatPhi(q) = sqrt(2) phi(q) Phi'(q), the functional value, and
    the construction metadata.

    Raises BetaTooSmall below the threshold sqrt(2 / trace(Q^2)) and
    RootNotBracketed if the q0 equation is not bracketed.
    """
    q_mat = _RSB_Q
    threshold = math.sqrt(2.0 / float(np.trace(q_mat @ q_mat)))
    if beta <= threshold:
        raise BetaTooSmall(
            f"beta must exceed sqrt(2/trace(Q^2)) = {threshold:.9f}, got {beta}"
        )
    model = cosh_model(beta, 2, q_scale_hint=1.1, truncation_order=truncation_order)
    dphi = q_mat / 2.0
    dphi2 = hadamard_pow(dphi, 2)
    dphi3 = hadamard_pow(dphi, 3)

    def curvature(q: float) -> float:
        return frob_ip(model.xi(q * dphi, 2), dphi2)

    def phi_fn(q: float) -> float:
        return curvature(q) ** (-0.5)

    def dphi_fn(q: float) -> float:
        dc = frob_ip(model.xi(q * dphi, 3), dphi3)
        return -0.5 * curvature(q) ** (-1.5) * dc

    def gap(q: float) -> float:
        return phi_fn(q) - (2.0 - q) / math.sqrt(2.0)

    lo, hi = 1e-9, 2.0 - 1e-9
    if not (gap(lo) < 0.0 < gap(hi)):
        raise RootNotBracketed(
            f"phi(0)={phi_fn(lo):.6f} must lie below sqrt(2) and phi(2) above "
            f"the line; got gap({lo})={gap(lo):.3e}, gap({hi})={gap(hi):.3e}"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gap(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    q0 = 0.5 * (lo + hi)

    x_left = -math.sqrt(2.0) * dphi_fn(q0)
    edges = np.linspace(0.0, q0, int(n_steps) + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    vals = np.array([-math.sqrt(2.0) * dphi_fn(float(u)) for u in mids])
    monotone = bool(np.all(np.diff(vals) >= -1e-12))
    vals = np.minimum(vals, 1.0)
    knots = np.concatenate([edges[:-1], [q0]])
    values = np.concatenate([vals, [1.0]])
    measure = MeasureFn(knots, values, mode="x")
    path = linear_path(q_mat)

    report = critical_residual(
        model, measure, path, n_quad=2 * int(n_steps), residual_tol=residual_tol
    )
    in_range = [
        (t, r) for (t, r) in report.per_point_residuals if t <= q0 + 1e-9
    ]
    sup_q0 = max(
        (r for (t, r), (_, s) in zip(report.per_point_residuals, report.support_grid) if s and t <= q0 + 1e-9),
        default=0.0,
    )

    probe = np.linspace(0.0, q0, 201)
    total = alpha_weighted_increment(path, measure)
    hat_res = 0.0
    for u in probe:
        hat = total - alpha_weighted_increment(path, measure, upto=float(u))
        ideal = math.sqrt(2.0) * phi_fn(float(u)) * dphi
        hat_res = max(hat_res, fro_norm(hat - ideal))

    value = continuous_cs(model, measure, path)
    report.residual_sup = sup_q0
    report.verdict = "pass" if sup_q0 <= residual_tol else "fail"
    report.per_point_residuals = in_range
    report.extras.update(
        {
            "q0": q0,
            "x_left_at_q0": x_left,
            "x_monotone": monotone,
            "phi_hat_identity_residual": hat_res,
            "cs_value": value,
            "phi_at_zero": phi_fn(1e-12),
            "beta_threshold": threshold,
            "model": model_to_dict(model),
        }
    )
    return measure, path, q0, report
