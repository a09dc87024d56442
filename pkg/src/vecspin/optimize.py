"""Minimization of the variational functionals over order parameters.

Feasible sets are handled by unconstrained parametrizations:

* PSD-monotone chains ending exactly at the constraint Q: raw Gram
  increments G_k G_k^T are congruence-renormalized so their sum is Q.
* Levels x: squared increments, normalized by the top cumulative sum, so
  the final level is pinned at 1 (the continuous functionals require the
  measure to reach 1 before the end of the path; schemes whose top level
  stays below 1 fall outside the admissible class and make the discrete
  forms degenerate).
* Parisi multipliers: Lambda = floor + eps I + Gamma Gamma^T where the
  floor is the cumulative xi' increment, which keeps the whole ladder PD.
* Zero-temperature triples: alpha as a squared-increment step function on
  the path knots and L = integral(alpha dPhi) + eps I + Gamma Gamma^T.

Local search is quasi-Newton (L-BFGS) on the free parameters with central
finite-difference gradients, multi-restart with deterministic seeding, and
warm starts that embed the best lower-level scheme exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as scipy_minimize

from .errors import NoFeasibleStart, NotPositiveDefinite, VecspinError
from .functionals import (
    DiscreteOrderParam,
    MeasureFn,
    ZeroTempTriple,
    discrete_cs,
    discrete_parisi,
    gse_functional,
    sine_interpolate,
)
from .linalg import frob_ip, min_eig, sum_all, sym_inv, sym_inv_sqrt, sym_sqrt, symmetrize
from .model import MixedModel

__all__ = [
    "OptimizerConfig",
    "OptReport",
    "SchemeParametrization",
    "GseParametrization",
    "central_diff_grad",
    "embed_scheme",
    "minimize_discrete_cs",
    "minimize_discrete_parisi",
    "minimize_gse",
    "sup_over_Q",
    "rs_gse_closed_form",
    "rs_gse_variants",
]

_INFEASIBLE = np.inf


@dataclass(frozen=True)
class OptimizerConfig:
    """Multi-restart local search configuration."""

    restarts: int = 3
    max_iters: int = 500
    grad_tol: float = 1e-6
    penalty_weight: float = 0.0
    seed: int = 0
    r_schedule: tuple[int, ...] = (2, 4)

    def __post_init__(self):
        if self.restarts < 1:
            raise VecspinError("restarts must be >= 1")
        if self.grad_tol <= 0:
            raise VecspinError("grad_tol must be positive")
        object.__setattr__(self, "r_schedule", tuple(int(r) for r in self.r_schedule))

    @staticmethod
    def from_dict(doc: dict) -> "OptimizerConfig":
        return OptimizerConfig(
            restarts=int(doc.get("restarts", 3)),
            max_iters=int(doc.get("max_iters", 500)),
            grad_tol=float(doc.get("grad_tol", 1e-6)),
            penalty_weight=float(doc.get("penalty_weight", 0.0)),
            seed=int(doc.get("seed", 0)),
            r_schedule=tuple(doc.get("r_schedule", (2, 4))),
        )


@dataclass
class OptReport:
    """Outcome of a multi-restart minimization."""

    best_value: float
    argmin: dict
    per_restart_values: list[float]
    converged: bool
    kkt_residual: float
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "best_value": self.best_value,
            "argmin": self.argmin,
            "per_restart_values": self.per_restart_values,
            "converged": self.converged,
            "kkt_residual": self.kkt_residual,
            "extras": self.extras,
        }


def central_diff_grad(f, theta: np.ndarray, rel_step: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient with per-coordinate scaled steps.

    Falls back to a one-sided difference when a perturbed point is
    infeasible (objective returns a non-finite value).
    """
    theta = np.asarray(theta, dtype=float)
    g = np.zeros_like(theta)
    f0 = None
    for i in range(theta.size):
        h = rel_step * (1.0 + abs(theta[i]))
        tp = theta.copy()
        tp[i] += h
        tm = theta.copy()
        tm[i] -= h
        fp, fm = f(tp), f(tm)
        if np.isfinite(fp) and np.isfinite(fm):
            g[i] = (fp - fm) / (2.0 * h)
        else:
            if f0 is None:
                f0 = f(theta)
            if np.isfinite(fp):
                g[i] = (fp - f0) / h
            elif np.isfinite(fm):
                g[i] = (f0 - fm) / h
            else:
                g[i] = 0.0
    return g


# ---------------------------------------------------------------------------
# parametrizations
# ---------------------------------------------------------------------------


class SchemeParametrization:
    """Unconstrained coordinates for a discrete scheme targeting Q.

    Layout: r Gram factors G_k (m x m each), then r-1 level increments c_k;
    with a multiplier, an extra m x m factor Gamma at the end. The chain is
    Q_k = sum of congruence-renormalized increments, exact at Q_r = Q; the
    levels are x_k = (c_1^2 + ... + c_k^2) / (c_1^2 + ... + c_{r-1}^2), so
    x_{r-1} = 1 always.
    """

    def __init__(self, model: MixedModel, q: np.ndarray, r: int, with_multiplier: bool = False):
        if r < 2:
            raise VecspinError("schemes need at least r = 2 levels")
        self.model = model
        self.q = symmetrize(np.asarray(q, dtype=float))
        self.m = model.m
        self.r = r
        self.with_multiplier = with_multiplier
        self.q_sqrt = sym_sqrt(self.q)
        self.eps_lambda = 1e-8
        self.n_params = r * self.m**2 + (r - 1) + (self.m**2 if with_multiplier else 0)

    # -- packing -------------------------------------------------------------

    def _split(self, theta: np.ndarray):
        m2 = self.m**2
        gs = [theta[k * m2 : (k + 1) * m2].reshape(self.m, self.m) for k in range(self.r)]
        cs = theta[self.r * m2 : self.r * m2 + self.r - 1]
        gamma = None
        if self.with_multiplier:
            gamma = theta[self.r * m2 + self.r - 1 :].reshape(self.m, self.m)
        return gs, cs, gamma

    def scheme(self, theta: np.ndarray) -> tuple[DiscreteOrderParam, np.ndarray | None]:
        """Decode parameters; raises VecspinError on infeasible coordinates."""
        gs, cs, gamma = self._split(np.asarray(theta, dtype=float))
        raw = [g @ g.T for g in gs]
        total = symmetrize(sum(raw))
        if min_eig(total) < 1e-10 * (1.0 + float(np.trace(total))):
            raise NoFeasibleStart("raw increments do not span the constraint")
        ridge = self.q_sqrt @ sym_inv_sqrt(total)
        incs = [symmetrize(ridge @ s @ ridge.T) for s in raw]
        qs = []
        acc = np.zeros((self.m, self.m))
        for s in incs[:-1]:
            acc = acc + s
            qs.append(acc.copy())
        qs.append(self.q)
        sig = np.cumsum(cs**2)
        if sig[-1] < 1e-14:
            raise NoFeasibleStart("all level increments vanish")
        x = np.concatenate([[0.0], sig / sig[-1]])
        p = DiscreteOrderParam(x=x, qs=tuple(qs))
        lam = None
        if self.with_multiplier:
            lam = symmetrize(
                self._multiplier_floor(x, qs)
                + self.eps_lambda * np.eye(self.m)
                + gamma @ gamma.T
            )
        return p, lam

    def _multiplier_floor(self, x, qs) -> np.ndarray:
        """sum_k x_k (xi'(Q_{k+1}) - xi'(Q_k)): the PD floor of the ladder."""
        mats = [np.zeros((self.m, self.m))] + list(qs)
        xips = [self.model.xi(q, 1) for q in mats]
        floor = np.zeros((self.m, self.m))
        for k in range(1, self.r):
            floor = floor + x[k] * (xips[k + 1] - xips[k])
        return floor

    def pack(self, p: DiscreteOrderParam, lam: np.ndarray | None = None) -> np.ndarray:
        """Exact coordinates for a scheme (and multiplier)."""
        mats = [np.zeros((self.m, self.m))] + list(p.qs)
        gs = [sym_sqrt(mats[k + 1] - mats[k]) for k in range(self.r)]
        dx = np.diff(p.x)
        cs = np.sqrt(np.maximum(dx, 0.0))
        parts = [g.ravel() for g in gs] + [cs]
        if self.with_multiplier:
            if lam is None:
                raise VecspinError("multiplier required to pack this parametrization")
            floor = self._multiplier_floor(p.x, list(p.qs))
            gap = symmetrize(lam - floor - self.eps_lambda * np.eye(self.m))
            parts.append(sym_sqrt(gap).ravel())
        return np.concatenate(parts)

    # -- objective -----------------------------------------------------------

    def value(self, theta: np.ndarray) -> float:
        try:
            p, lam = self.scheme(theta)
            if self.with_multiplier:
                return discrete_parisi(self.model, lam, p)
            return discrete_cs(self.model, p)
        except VecspinError:
            return _INFEASIBLE

    def gradient(self, theta: np.ndarray, rel_step: float = 1e-6) -> np.ndarray:
        return central_diff_grad(self.value, theta, rel_step)

    # -- starting points -------------------------------------------------------

    def init_random(self, rng: np.random.Generator) -> np.ndarray:
        gs = [
            (0.35 * rng.normal(size=(self.m, self.m)) + np.diag(rng.uniform(0.3, 1.0, self.m))).ravel()
            for _ in range(self.r)
        ]
        cs = rng.uniform(0.4, 1.2, self.r - 1)
        parts = gs + [cs]
        if self.with_multiplier:
            parts.append(
                (0.3 * rng.normal(size=(self.m, self.m)) + 0.8 * np.eye(self.m)).ravel()
            )
        return np.concatenate(parts)

    def init_equal(self) -> np.ndarray:
        """Deterministic start: equal increments Q/r, evenly spread levels."""
        inc = self.q / self.r
        qs = tuple((k + 1) * inc for k in range(self.r))
        x = np.concatenate([[0.0], np.linspace(1.0 / (self.r - 1), 1.0, self.r - 1)])
        p = DiscreteOrderParam(x=x, qs=qs)
        lam = None
        if self.with_multiplier:
            tail = self.q - qs[-2]
            lam_1 = sym_inv(tail + 1e-6 * np.eye(self.m))
            mats = [np.zeros((self.m, self.m))] + list(qs)
            floor = np.zeros((self.m, self.m))
            for k in range(1, self.r):
                floor = floor + x[k] * (
                    self.model.xi(mats[k + 1], 1) - self.model.xi(mats[k], 1)
                )
            lam = symmetrize(floor + lam_1 + self.eps_lambda * np.eye(self.m))
        return self.pack(p, lam)


def embed_scheme(p: DiscreteOrderParam, r_new: int) -> DiscreteOrderParam:
    """Refine a scheme to r_new levels without changing its value.

    Splits the largest-trace increment above level 0 into halves, keeping
    the level value on both halves; the functionals are invariant under
    this refinement.
    """
    if r_new < p.r:
        raise VecspinError("can only embed into a finer schedule")
    m = p.m_dim
    mats = [np.zeros((m, m))] + list(p.qs)
    pieces = [(mats[k + 1] - mats[k], float(p.x[k])) for k in range(p.r)]
    while len(pieces) < r_new:
        k = max(range(1, len(pieces)), key=lambda i: float(np.trace(pieces[i][0])))
        inc, lvl = pieces[k]
        pieces[k : k + 1] = [(0.5 * inc, lvl), (0.5 * inc, lvl)]
    qs = []
    acc = np.zeros((m, m))
    for inc, _ in pieces:
        acc = acc + inc
        qs.append(acc.copy())
    qs[-1] = p.qs[-1]
    x = np.array([lvl for _, lvl in pieces])
    return DiscreteOrderParam(x=x, qs=tuple(qs))


class GseParametrization:
    """Coordinates for zero-temperature triples on an r-knot sine path.

    Layout: r Gram factors for the path increments, r squared increments
    for the step density alpha, and an m x m factor for the slack of L over
    integral(alpha dPhi).
    """

    def __init__(self, model: MixedModel, q: np.ndarray, r: int, n_quad: int = 601):
        self.model = model
        self.q = symmetrize(np.asarray(q, dtype=float))
        self.m = model.m
        self.r = max(int(r), 1)
        self.n_quad = n_quad
        self.q_sqrt = sym_sqrt(self.q)
        self.eps_l = 1e-7
        self.n_params = self.r * self.m**2 + self.r + self.m**2

    def _split(self, theta):
        m2 = self.m**2
        gs = [theta[k * m2 : (k + 1) * m2].reshape(self.m, self.m) for k in range(self.r)]
        avals = theta[self.r * m2 : self.r * m2 + self.r]
        gamma = theta[self.r * m2 + self.r :].reshape(self.m, self.m)
        return gs, avals, gamma

    def triple(self, theta: np.ndarray) -> ZeroTempTriple:
        gs, avals, gamma = self._split(np.asarray(theta, dtype=float))
        raw = [g @ g.T for g in gs]
        total = symmetrize(sum(raw))
        if min_eig(total) < 1e-10 * (1.0 + float(np.trace(total))):
            raise NoFeasibleStart("raw increments do not span the constraint")
        ridge = self.q_sqrt @ sym_inv_sqrt(total)
        incs = [symmetrize(ridge @ s @ ridge.T) for s in raw]
        qs = []
        acc = np.zeros((self.m, self.m))
        for s in incs[:-1]:
            acc = acc + s
            qs.append(acc.copy())
        qs.append(self.q)
        dummy_x = np.concatenate([[0.0], np.ones(self.r - 1)]) if self.r > 1 else np.array([0.0])
        chain = DiscreteOrderParam(x=dummy_x, qs=tuple(qs))
        _, path = sine_interpolate(chain)
        levels = np.cumsum(avals**2)
        knots = path.knots[:-1]
        alpha = MeasureFn(knots, levels[: len(knots)], mode="alpha")
        weighted = np.zeros((self.m, self.m))
        mats = [np.zeros((self.m, self.m))] + qs
        for k in range(len(mats) - 1):
            lvl = levels[min(k, len(levels) - 1)]
            weighted = weighted + lvl * (mats[k + 1] - mats[k])
        l_mat = symmetrize(weighted + self.eps_l * np.eye(self.m) + gamma @ gamma.T)
        return ZeroTempTriple(L=l_mat, alpha=alpha, path=path)

    def value(self, theta: np.ndarray) -> float:
        try:
            return gse_functional(self.model, self.triple(theta), n_quad=self.n_quad)
        except VecspinError:
            return _INFEASIBLE

    def gradient(self, theta: np.ndarray, rel_step: float = 1e-6) -> np.ndarray:
        return central_diff_grad(self.value, theta, rel_step)

    def init_random(self, rng: np.random.Generator) -> np.ndarray:
        gs = [
            (0.3 * rng.normal(size=(self.m, self.m)) + np.diag(rng.uniform(0.3, 1.0, self.m))).ravel()
            for _ in range(self.r)
        ]
        avals = rng.uniform(0.0, 0.7, self.r)
        gamma = (0.3 * rng.normal(size=(self.m, self.m)) + 0.7 * np.eye(self.m)).ravel()
        return np.concatenate(gs + [avals, gamma])

    def init_rs(self) -> np.ndarray:
        """Replica-symmetric start: linear path, alpha = 0, L at the closed form."""
        gs = [sym_sqrt(self.q / self.r).ravel() for _ in range(self.r)]
        avals = np.zeros(self.r)
        try:
            l0, _ = rs_gse_closed_form(self.model, self.q)
            gap = symmetrize(l0 - self.eps_l * np.eye(self.m))
            gamma = sym_sqrt(gap).ravel()
        except VecspinError:
            gamma = np.eye(self.m).ravel()
        return np.concatenate(gs + [avals, gamma])


# ---------------------------------------------------------------------------
# multistart driver
# ---------------------------------------------------------------------------


def _run_starts(value_fn, grad_fn, starts, cfg: OptimizerConfig):
    """L-BFGS from every start; returns (best_theta, best_value, values, kkt)."""
    results = []
    for theta0 in starts:
        if not np.isfinite(value_fn(theta0)):
            continue
        res = scipy_minimize(
            value_fn,
            theta0,
            jac=grad_fn,
            method="L-BFGS-B",
            options={
                "maxiter": cfg.max_iters,
                "ftol": 1e-15,
                "gtol": cfg.grad_tol,
                "maxcor": 30,
            },
        )
        results.append((float(res.fun), np.asarray(res.x)))
    if not results:
        raise NoFeasibleStart("every restart was infeasible at its starting point")
    values = [v for v, _ in results]
    best_v, best_theta = results[0]
    for v, theta in results[1:]:
        if v < best_v - 1e-10 or (
            abs(v - best_v) <= 1e-10 and np.linalg.norm(theta) < np.linalg.norm(best_theta)
        ):
            best_v, best_theta = v, theta
    kkt = float(np.max(np.abs(grad_fn(best_theta))))
    return best_theta, best_v, values, kkt


def _minimize_scheme(model, q, cfg, with_multiplier: bool) -> OptReport:
    q = symmetrize(np.asarray(q, dtype=float))
    best = None
    all_values: list[float] = []
    per_r: dict[int, float] = {}
    prev: tuple[DiscreteOrderParam, np.ndarray | None] | None = None
    for r in cfg.r_schedule:
        prob = SchemeParametrization(model, q, r, with_multiplier=with_multiplier)
        starts = [prob.init_equal()]
        for i in range(cfg.restarts):
            rng = np.random.default_rng([cfg.seed, r, i])
            starts.append(prob.init_random(rng))
        if prev is not None and r >= prev[0].r:
            embedded = embed_scheme(prev[0], r)
            lam_prev = prev[1]
            try:
                starts.append(prob.pack(embedded, lam_prev))
            except VecspinError:
                pass
        theta, v, values, kkt = _run_starts(prob.value, prob.gradient, starts, cfg)
        all_values.extend(values)
        per_r[r] = float(v)
        scheme, lam = prob.scheme(theta)
        if best is None or v < best[0]:
            best = (v, scheme, lam, kkt, r)
        prev = (scheme, lam)
    assert best is not None
    v, scheme, lam, kkt, r = best
    argmin = scheme.to_dict()
    argmin["r"] = scheme.r
    if with_multiplier and lam is not None:
        argmin["lambda"] = lam.tolist()
    return OptReport(
        best_value=float(min(v, min(all_values))),
        argmin=argmin,
        per_restart_values=all_values,
        converged=kkt <= cfg.grad_tol,
        kkt_residual=kkt,
        extras={"best_r": r, "per_r_values": per_r},
    )


def minimize_discrete_cs(model: MixedModel, q: np.ndarray, cfg: OptimizerConfig) -> OptReport:
    """Minimize the discrete Crisanti-Sommers functional over schemes
    constrained to end at q, sweeping the level counts in cfg.r_schedule."""
    return _minimize_scheme(model, q, cfg, with_multiplier=False)


def minimize_discrete_parisi(model: MixedModel, q: np.ndarray, cfg: OptimizerConfig) -> OptReport:
    """Minimize the discrete Parisi functional over schemes and multipliers."""
    return _minimize_scheme(model, q, cfg, with_multiplier=True)


def minimize_gse(
    model: MixedModel,
    q: np.ndarray,
    cfg: OptimizerConfig,
    n_quad: int = 601,
    report_quad: int = 1501,
) -> OptReport:
    """Minimize the zero-temperature functional over feasible triples."""
    q = symmetrize(np.asarray(q, dtype=float))
    r = max(2, cfg.r_schedule[-1])
    prob = GseParametrization(model, q, r, n_quad=n_quad)
    starts = [prob.init_rs()]
    for i in range(cfg.restarts):
        rng = np.random.default_rng([cfg.seed, 101, i])
        starts.append(prob.init_random(rng))
    theta, v, values, kkt = _run_starts(prob.value, prob.gradient, starts, cfg)
    triple = prob.triple(theta)
    refined = gse_functional(model, triple, n_quad=report_quad)
    alpha_sup = float(triple.alpha.vs[-1])
    return OptReport(
        best_value=float(refined),
        argmin=triple.to_dict(),
        per_restart_values=values,
        converged=kkt <= cfg.grad_tol,
        kkt_residual=kkt,
        extras={"alpha_sup": alpha_sup, "coarse_value": float(v), "r": r},
    )


# ---------------------------------------------------------------------------
# outer maximization over the constraint
# ---------------------------------------------------------------------------


def sup_over_Q(model: MixedModel, cfg: OptimizerConfig) -> tuple[np.ndarray, float]:
    """Best-found maximizer of the constrained free energy over unit-diagonal
    PSD matrices Q (rows of a correlation factor, unit-normalized).

    No global optimality is claimed; the value is the best over restarts of
    a derivative-free outer search wrapping the inner minimization.
    """
    m = model.m
    inner_cfg = OptimizerConfig(
        restarts=1,
        max_iters=min(cfg.max_iters * 4, 250),
        grad_tol=max(cfg.grad_tol, 1e-7),
        seed=cfg.seed,
        r_schedule=cfg.r_schedule,
    )

    def q_of(theta: np.ndarray) -> np.ndarray:
        rows = theta.reshape(m, m)
        norms = np.linalg.norm(rows, axis=1, keepdims=True)
        if np.any(norms < 1e-12):
            raise NoFeasibleStart("degenerate correlation factor row")
        c = rows / norms
        return symmetrize(c @ c.T)

    def neg_value(theta: np.ndarray) -> float:
        try:
            q = q_of(theta)
        except VecspinError:
            return _INFEASIBLE
        if min_eig(q) < 1e-6:
            return _INFEASIBLE
        try:
            rep = minimize_discrete_cs(model, q, inner_cfg)
        except VecspinError:
            return _INFEASIBLE
        return -rep.best_value

    if m == 1:
        q = np.array([[1.0]])
        return q, minimize_discrete_cs(model, q, inner_cfg).best_value

    best_theta, best_val = None, np.inf
    for i in range(cfg.restarts):
        rng = np.random.default_rng([cfg.seed, 717, i])
        theta0 = (np.eye(m) + 0.25 * rng.normal(size=(m, m))).ravel()
        res = scipy_minimize(
            neg_value,
            theta0,
            method="Nelder-Mead",
            options={"maxiter": cfg.max_iters, "xatol": 1e-4, "fatol": 1e-7},
        )
        if res.fun < best_val:
            best_val, best_theta = float(res.fun), np.asarray(res.x)
    if best_theta is None or not np.isfinite(best_val):
        raise NoFeasibleStart("outer search found no feasible constraint")
    return q_of(best_theta), -best_val


# ---------------------------------------------------------------------------
# replica-symmetric zero-temperature closed form
# ---------------------------------------------------------------------------


def rs_gse_variants(model: MixedModel, q: np.ndarray) -> dict:
    """Closed-form replica-symmetric ground-state data.

    Returns the minimizing L_0 = Q^{1/2} M^{-1/2} Q^{1/2} with
    M = Q^{1/2} (xi'(Q) + hh^T) Q^{1/2}, together with both the trace and
    the all-entries-sum readings of M^{1/2}. Substituting L_0 into the
    zero-temperature functional yields the trace reading, which is used as
    the primary value; the two coincide whenever M^{1/2} is diagonal.
    """
    q = symmetrize(np.asarray(q, dtype=float))
    if min_eig(q) <= 0:
        raise NotPositiveDefinite("constraint Q must be positive definite", min_eig(q))
    a = model.xi(q, order=1) + model.field_outer()
    if min_eig(a) <= 0:
        raise NotPositiveDefinite("xi'(Q) + hh^T must be positive definite", min_eig(a))
    q_half = sym_sqrt(q)
    mmat = symmetrize(q_half @ a @ q_half)
    m_half = sym_sqrt(mmat)
    l0 = symmetrize(q_half @ sym_inv_sqrt(mmat) @ q_half)
    trace_value = float(np.trace(m_half))
    sum_value = sum_all(m_half)
    return {
        "l0": l0,
        "value": trace_value,
        "trace_value": trace_value,
        "sum_value": sum_value,
        "variants_agree": bool(abs(trace_value - sum_value) <= 1e-9 * (1.0 + abs(trace_value))),
    }


def rs_gse_closed_form(model: MixedModel, q: np.ndarray) -> tuple[np.ndarray, float]:
    """Replica-symmetric minimizer L_0 and ground-state value trace(M^{1/2})."""
    out = rs_gse_variants(model, q)
    return out["l0"], out["value"]
