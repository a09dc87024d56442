"""Variational functionals over matrix order parameters.

Implements the discrete and continuous Crisanti-Sommers functionals, the
discrete and continuous Parisi functionals, and the zero-temperature
ground-state functional, together with the order-parameter types they act
on: discrete replica-symmetry-breaking schemes, piecewise-analytic monotone
PSD matrix paths, step measure functions, and zero-temperature triples.

Quadrature convention: every integral is evaluated on a grid aligned with
the breakpoints of the path and the measure, so integrands are analytic on
each panel and the measure is constant there. Running matrix integrals
(the suffix/prefix accumulations weighted by the step measure) telescope
exactly per panel, since the weighted integrands are derivatives of known
matrix functions on each panel; only the outer scalar integrals need
quadrature, done by composite Simpson on the node values. The evaluation
is deterministic: blocks are reduced in grid order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateKnots,
    DimensionMismatch,
    InfeasibleTriple,
    InvalidThat,
    MonotonicityViolation,
    NotPositiveDefinite,
    SingularD,
    SingularLambda,
    SingularPath,
)
from .linalg import as_sym, frob_ip, logdet, min_eig, sum_all, sym_inv, symmetrize
from .model import MixedModel

__all__ = [
    "DiscreteOrderParam",
    "PathSegment",
    "MatrixPath",
    "MeasureFn",
    "ZeroTempTriple",
    "linear_path",
    "sine_interpolate",
    "discrete_cs",
    "discrete_parisi",
    "continuous_cs",
    "continuous_cs_rewritten",
    "continuous_parisi",
    "gse_functional",
]

_KNOT_TOL = 1e-12


# ---------------------------------------------------------------------------
# order-parameter types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteOrderParam:
    """Discrete RSB scheme: levels 0 = x_0 <= ... <= x_{r-1} <= 1 paired with
    a PSD-monotone chain 0 <= Q_1 <= ... <= Q_r (Q_0 = 0 implicit).

    ``qs[-1]`` is the self-overlap constraint the scheme targets.
    """

    x: np.ndarray
    qs: tuple[np.ndarray, ...]

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1)
        qs = tuple(as_sym(q, f"Q_{k + 1}") for k, q in enumerate(self.qs))
        if len(x) != len(qs):
            raise DimensionMismatch(
                f"{len(x)} levels but {len(qs)} matrices; need one matrix per level"
            )
        if len(x) < 1:
            raise DimensionMismatch("need at least one level")
        m = qs[0].shape[0]
        if any(q.shape != (m, m) for q in qs):
            raise DimensionMismatch("all Q_k must share the same dimension")
        if abs(x[0]) > 1e-12:
            raise MonotonicityViolation(f"x_0 must be 0, got {x[0]}")
        if np.any(np.diff(x) < -1e-12) or x[-1] > 1.0 + 1e-12:
            raise MonotonicityViolation("x levels must be nondecreasing in [0, 1]")
        chain = np.concatenate([np.zeros((1, m, m)), np.stack(qs)])
        lows = np.linalg.eigvalsh(chain[1:] - chain[:-1])[:, 0]
        if lows.min() < -1e-10:
            k = int(np.argmin(lows))
            raise MonotonicityViolation(f"increment Q_{k + 1} - Q_{k} is not PSD")
        x = x.copy()
        x.setflags(write=False)
        for q in qs:
            q.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "qs", qs)

    @property
    def r(self) -> int:
        return len(self.x)

    @property
    def m_dim(self) -> int:
        return self.qs[0].shape[0]

    @property
    def target(self) -> np.ndarray:
        return self.qs[-1]

    def to_dict(self) -> dict:
        return {
            "x": [float(v) for v in self.x],
            "Qs": [q.tolist() for q in self.qs],
        }

    @staticmethod
    def from_dict(doc: dict) -> "DiscreteOrderParam":
        return DiscreteOrderParam(
            x=np.asarray(doc["x"], dtype=float),
            qs=tuple(np.asarray(q, dtype=float) for q in doc["Qs"]),
        )


@dataclass(frozen=True)
class PathSegment:
    """One analytic piece of a matrix path: linear, sine, or constant."""

    kind: str
    t0: float
    t1: float
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if self.kind not in ("linear", "sine", "constant"):
            raise DimensionMismatch(f"unknown segment kind {self.kind!r}")
        if not self.t1 > self.t0:
            raise DegenerateKnots(f"segment needs t1 > t0, got [{self.t0}, {self.t1}]")
        object.__setattr__(self, "a", as_sym(self.a, "segment start"))
        object.__setattr__(self, "b", as_sym(self.b, "segment end"))

    def phi(self, ts: np.ndarray) -> np.ndarray:
        """Values at times `ts`, stacked (len(ts), m, m)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if self.kind == "constant":
            return np.broadcast_to(self.a, (len(ts),) + self.a.shape).copy()
        if self.kind == "linear":
            s = (ts - self.t0) / (self.t1 - self.t0)
            return self.a[None] + s[:, None, None] * (self.b - self.a)[None]
        mid = 0.5 * (self.a + self.b)
        half = 0.5 * (self.b - self.a)
        arg = np.pi * (2.0 * ts - self.t0 - self.t1) / (2.0 * (self.t1 - self.t0))
        return mid[None] + np.sin(arg)[:, None, None] * half[None]

    def dphi(self, ts: np.ndarray) -> np.ndarray:
        """Derivatives at times `ts`, stacked (len(ts), m, m)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        shape = (len(ts),) + self.a.shape
        if self.kind == "constant":
            return np.zeros(shape)
        if self.kind == "linear":
            slope = (self.b - self.a) / (self.t1 - self.t0)
            return np.broadcast_to(slope, shape).copy()
        half = 0.5 * (self.b - self.a)
        rate = np.pi / (self.t1 - self.t0)
        arg = np.pi * (2.0 * ts - self.t0 - self.t1) / (2.0 * (self.t1 - self.t0))
        return rate * np.cos(arg)[:, None, None] * half[None]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "t0": self.t0,
            "t1": self.t1,
            "a": self.a.tolist(),
            "b": self.b.tolist(),
        }


class MatrixPath:
    """Piecewise-analytic monotone PSD matrix path on [0, t_end].

    Segments must tile [0, t_end] starting at the zero matrix. The path
    exposes exact values and derivatives everywhere.
    """

    def __init__(self, segments, validate: bool = True):
        segments = tuple(segments)
        if not segments:
            raise DimensionMismatch("path needs at least one segment")
        self.segments = segments
        self.m_dim = segments[0].a.shape[0]
        self.t_end = segments[-1].t1
        self.endpoint = segments[-1].b
        self.knots = np.array([s.t0 for s in segments] + [self.t_end])
        if abs(segments[0].t0) > _KNOT_TOL:
            raise DimensionMismatch("path must start at t = 0")
        for s0, s1 in zip(segments, segments[1:]):
            if abs(s0.t1 - s1.t0) > _KNOT_TOL:
                raise DimensionMismatch("segments must tile the interval")
            if np.abs(s0.b - s1.a).max() > 1e-10:
                raise DimensionMismatch("segments must agree at shared knots")
        if validate:
            self._validate()

    def _validate(self, n_probe: int = 100):
        if np.abs(self.segments[0].a).max() > 1e-10:
            raise MonotonicityViolation("path must start at the zero matrix")
        probes = []
        for s in self.segments:
            ts = np.linspace(s.t0, s.t1, max(2, n_probe // len(self.segments) + 1))
            probes.append(s.dphi(ts))
        stack = np.concatenate(probes, axis=0)
        w = np.linalg.eigvalsh(stack)
        if w[:, 0].min() < -1e-10:
            raise MonotonicityViolation(
                f"path derivative loses PSD (min eigenvalue {w[:, 0].min():.3e})"
            )

    def _segment_at(self, t: float) -> PathSegment:
        for s in self.segments:
            if t <= s.t1 + _KNOT_TOL:
                return s
        return self.segments[-1]

    def phi(self, t: float) -> np.ndarray:
        return self._segment_at(t).phi(np.array([t]))[0]

    def dphi(self, t: float) -> np.ndarray:
        return self._segment_at(t).dphi(np.array([t]))[0]

    def phi_many(self, ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        out = np.empty((len(ts), self.m_dim, self.m_dim))
        for i, t in enumerate(ts):
            out[i] = self.phi(float(t))
        return out

    def trace_residual_at_knots(self, measure: "MeasureFn | None" = None) -> float:
        """Largest |trace(phi(t_k)) - t_k| over knots (restricted to the
        measure's support knots when a measure is supplied)."""
        res = 0.0
        for t in self.knots:
            if measure is not None and not measure.increases_near(float(t)):
                continue
            res = max(res, abs(float(np.trace(self.phi(float(t)))) - float(t)))
        return res

    def to_dict(self) -> dict:
        return {"segments": [s.to_dict() for s in self.segments]}

    @staticmethod
    def from_dict(doc: dict) -> "MatrixPath":
        segs = [
            PathSegment(
                kind=s["kind"],
                t0=float(s["t0"]),
                t1=float(s["t1"]),
                a=np.asarray(s["a"], dtype=float),
                b=np.asarray(s["b"], dtype=float),
            )
            for s in doc["segments"]
        ]
        return MatrixPath(segs)


def linear_path(q: np.ndarray, t_end: float | None = None) -> MatrixPath:
    """Single linear segment from 0 to `q`; by default over [0, trace(q)] so
    the trace parametrization holds along the whole path."""
    q = as_sym(q, "target")
    if t_end is None:
        t_end = float(np.trace(q))
    return MatrixPath([PathSegment("linear", 0.0, float(t_end), np.zeros_like(q), q)])


class MeasureFn:
    """Right-continuous nondecreasing step function given by knots.

    mode "x": finite-temperature distribution function with values in
    [0, 1]; mode "alpha": zero-temperature density, nonnegative and
    unbounded.
    """

    def __init__(self, ts, vs, mode: str = "x"):
        ts = np.asarray(ts, dtype=float).reshape(-1)
        vs = np.asarray(vs, dtype=float).reshape(-1)
        if mode not in ("x", "alpha"):
            raise DimensionMismatch(f"unknown measure mode {mode!r}")
        if len(ts) != len(vs) or len(ts) == 0:
            raise DimensionMismatch("knots and values must align and be nonempty")
        if np.any(np.diff(ts) <= 0):
            raise MonotonicityViolation("knot times must be strictly increasing")
        if abs(ts[0]) > _KNOT_TOL:
            raise DimensionMismatch("first knot must sit at t = 0")
        if np.any(np.diff(vs) < -1e-12):
            raise MonotonicityViolation("measure values must be nondecreasing")
        if vs[0] < -1e-12:
            raise MonotonicityViolation("measure values must be nonnegative")
        if mode == "x" and vs[-1] > 1.0 + 1e-12:
            raise MonotonicityViolation("x-mode values must stay in [0, 1]")
        self.ts = ts
        self.vs = np.clip(vs, 0.0, 1.0) if mode == "x" else np.maximum(vs, 0.0)
        self.mode = mode
        self.ts.setflags(write=False)
        self.vs.setflags(write=False)

    def value(self, t: float) -> float:
        i = int(np.searchsorted(self.ts, t + _KNOT_TOL, side="right")) - 1
        return float(self.vs[max(i, 0)])

    def value_many(self, ts: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.ts, np.asarray(ts, dtype=float) + _KNOT_TOL, side="right") - 1
        return self.vs[np.maximum(idx, 0)]

    @property
    def t_x(self) -> float | None:
        """First knot at which an x-mode measure reaches 1."""
        hits = np.nonzero(self.vs >= 1.0 - 1e-12)[0]
        if len(hits) == 0:
            return None
        return float(self.ts[hits[0]])

    def increases_near(self, t: float, width: float = 1e-9, tol: float = 0.0) -> bool:
        """Whether the function increases across a window around `t`."""
        return self.value(t + width) - self.value(t - width) > tol

    def to_dict(self) -> dict:
        return {"mode": self.mode, "knots": [[float(t), float(v)] for t, v in zip(self.ts, self.vs)]}

    @staticmethod
    def from_dict(doc: dict) -> "MeasureFn":
        knots = np.asarray(doc["knots"], dtype=float)
        return MeasureFn(knots[:, 0], knots[:, 1], mode=doc.get("mode", "x"))


def alpha_weighted_increment(path: MatrixPath, alpha: MeasureFn, upto: float | None = None) -> np.ndarray:
    """Exact value of the running integral of alpha(s) dPhi(s) up to `upto`.

    Step measures make the integral telescoping: each constant piece
    contributes its level times the path increment over the piece.
    """
    t_hi = path.t_end if upto is None else float(upto)
    breaks = np.unique(np.concatenate([path.knots, alpha.ts, [0.0, t_hi]]))
    breaks = breaks[(breaks >= -_KNOT_TOL) & (breaks <= t_hi + _KNOT_TOL)]
    out = np.zeros((path.m_dim, path.m_dim))
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        if hi - lo <= _KNOT_TOL:
            continue
        out += alpha.value(0.5 * (lo + hi)) * (path.phi(float(hi)) - path.phi(float(lo)))
    return symmetrize(out)


@dataclass(frozen=True)
class ZeroTempTriple:
    """Zero-temperature order parameter (L, alpha, path) with the feasibility
    requirement L - integral(alpha dPhi) positive definite."""

    L: np.ndarray
    alpha: MeasureFn
    path: MatrixPath

    def __post_init__(self):
        L = as_sym(self.L, "L")
        L.setflags(write=False)
        object.__setattr__(self, "L", L)
        if self.alpha.mode != "alpha":
            raise DimensionMismatch("triple needs an alpha-mode measure")
        slack = min_eig(L - alpha_weighted_increment(self.path, self.alpha))
        if slack <= 1e-12:
            raise InfeasibleTriple(
                f"L does not dominate the alpha-weighted path increment "
                f"(slack eigenvalue {slack:.3e})"
            )

    def to_dict(self) -> dict:
        return {
            "L": self.L.tolist(),
            "alpha": self.alpha.to_dict(),
            "path": self.path.to_dict(),
        }

    @staticmethod
    def from_dict(doc: dict) -> "ZeroTempTriple":
        return ZeroTempTriple(
            L=np.asarray(doc["L"], dtype=float),
            alpha=MeasureFn.from_dict(doc["alpha"]),
            path=MatrixPath.from_dict(doc["path"]),
        )


# ---------------------------------------------------------------------------
# sine interpolation of a discrete scheme
# ---------------------------------------------------------------------------


def sine_interpolate(p: DiscreteOrderParam) -> tuple[MeasureFn, MatrixPath]:
    """Turn a discrete scheme into a smooth matrix path plus step measure.

    Knots sit at t_k = trace(Q_k); between consecutive knots the path is the
    sine arc through the two matrices, which matches values at the knots,
    has vanishing derivative there (so segments join C^1), and passes the
    average at the midpoint. The measure is x_k on [t_k, t_{k+1}) with a
    final knot pinning the value 1 at t_end.

    Zero-trace increments are merged away (a PSD increment with zero trace
    is the zero matrix); coincident knots with genuinely different matrices
    raise DegenerateKnots.
    """
    mats = [np.zeros((p.m_dim, p.m_dim))] + list(p.qs)
    ts = [float(np.trace(q)) for q in mats]
    segs: list[PathSegment] = []
    mknots: list[tuple[float, float]] = []
    for k in range(p.r):
        dt = ts[k + 1] - ts[k]
        dq = mats[k + 1] - mats[k]
        if dt < _KNOT_TOL:
            if np.abs(dq).max() > 1e-10:
                raise DegenerateKnots(
                    f"knots t_{k} and t_{k + 1} coincide but the matrices differ"
                )
            continue
        segs.append(PathSegment("sine", ts[k], ts[k + 1], mats[k], mats[k + 1]))
        mknots.append((ts[k], float(p.x[k])))
    if not segs:
        raise DegenerateKnots("all increments are degenerate")
    mknots.append((ts[-1], 1.0))
    # right-continuity: on merged knots keep the last level
    dedup: dict[float, float] = {}
    for t, v in mknots:
        dedup[round(t, 15)] = v
    tt = sorted(dedup)
    measure = MeasureFn(np.array(tt), np.array([dedup[t] for t in tt]), mode="x")
    return measure, MatrixPath(segs)


# ---------------------------------------------------------------------------
# discrete functionals
# ---------------------------------------------------------------------------


def _logdet_as(a: np.ndarray, err, what: str) -> float:
    try:
        return logdet(a)
    except NotPositiveDefinite as exc:
        raise err(f"{what} is not positive definite ({exc})") from exc


def _inv_as(a: np.ndarray, err, what: str) -> np.ndarray:
    try:
        return sym_inv(a, domain_tol=0.0)
    except Exception as exc:  # noqa: BLE001 - map any spectral failure
        raise err(f"{what} could not be inverted ({exc})") from exc


def _log_ratio_sum(lds: list[float], x: np.ndarray, ks: range, err) -> float:
    """sum over k of (1/x_k)(log|A_{k+1}| - log|A_k|) with 0/0 -> 0."""
    total = 0.0
    for k in ks:
        d = lds[k + 1] - lds[k]
        if x[k] <= 0.0:
            if abs(d) < 1e-10:
                continue
            raise err(f"level x_{k} = 0 with a non-trivial increment")
        total += d / x[k]
    return total


def discrete_cs(model: MixedModel, p: DiscreteOrderParam) -> float:
    """Discrete Crisanti-Sommers functional.

    With D_k = sum_{j>=k} x_j (Q_{j+1} - Q_j) and Q_r the constraint,

        1/2 [ <hh^T, D_1> + (1/x_{r-1}) log|Q_r - Q_{r-1}|
              - sum_{k<=r-2} (1/x_k) log(|D_{k+1}|/|D_k|)
              + <Q_1, D_1^{-1}>
              + sum_k x_k Sum(xi(Q_{k+1}) - xi(Q_k)) ].
    """
    r = p.r
    if r < 2:
        raise MonotonicityViolation("the Crisanti-Sommers form needs r >= 2 levels")
    if p.m_dim != model.m:
        raise DimensionMismatch("order parameter and model dimension differ")
    x = p.x
    if x[r - 1] <= 0.0:
        raise MonotonicityViolation("the top level x_{r-1} must be positive")
    mats = np.concatenate([np.zeros((1, model.m, model.m)), np.stack(p.qs)])
    incs = mats[1:] - mats[:-1]
    # D_k = sum_{j >= k} x_j (Q_{j+1} - Q_j) for k = 1..r-1, via suffix cumsum
    weighted = x[1:, None, None] * incs[1:]
    ds = np.cumsum(weighted[::-1], axis=0)[::-1]
    w_ds, v_ds = np.linalg.eigh(ds)
    if w_ds[:, 0].min() <= 1e-13:
        raise SingularD(
            f"a cumulative increment matrix is singular "
            f"(min eigenvalue {w_ds[:, 0].min():.3e})"
        )
    lds = [0.0] + list(np.sum(np.log(w_ds), axis=1))
    t_field = frob_ip(model.field_outer(), ds[0])
    t_last = _logdet_as(p.qs[-1] - mats[r - 1], SingularD, "Q - Q_{r-1}") / x[r - 1]
    t_ratio = -_log_ratio_sum(lds, x, range(1, r - 1), SingularD)
    d1_inv = (v_ds[0] / w_ds[0]) @ v_ds[0].T
    t_q1 = frob_ip(mats[1], d1_inv)
    s_xi = np.sum(_xi_stack(model, mats, 0), axis=(1, 2))
    t_xi = float(np.sum(x[1:] * (s_xi[2:] - s_xi[1:-1])))
    return 0.5 * (t_field + t_last + t_ratio + t_q1 + t_xi)


def discrete_parisi(
    model: MixedModel,
    lam: np.ndarray,
    p: DiscreteOrderParam,
    field_term: str = "lambda1",
) -> float:
    """Discrete Parisi functional with multiplier matrix `lam`.

    The multiplier ladder is Lambda_r = lam and
    Lambda_k = lam - sum_{j>=k} x_j (xi'(Q_{j+1}) - xi'(Q_j)). The value is

        1/2 [ <hh^T, Lambda_1^{-1}> + <lam, Q> - m - log|lam|
              + sum_k (1/x_k) log(|Lambda_{k+1}|/|Lambda_k|)
              + <xi'(Q_1), Lambda_1^{-1}>
              - sum_k x_k Sum(theta(Q_{k+1}) - theta(Q_k)) ].

    The log-ratio terms carry 1/x_k weights: that choice makes the discrete
    value agree with the continuous Parisi functional on sine-interpolated
    schemes and keeps the functional an upper bound of the free energy.
    `field_term="lambda"` switches the field pairing to <hh^T, lam^{-1}>
    for comparison.
    """
    if field_term not in ("lambda1", "lambda"):
        raise DimensionMismatch(f"unknown field_term {field_term!r}")
    if p.m_dim != model.m:
        raise DimensionMismatch("order parameter and model dimension differ")
    lam = as_sym(lam, "lambda")
    r = p.r
    x = p.x
    mats = np.concatenate([np.zeros((1, model.m, model.m)), np.stack(p.qs)])
    xips = _xi_stack(model, mats, 1)
    # Lambda_k = lam - sum_{j >= k} x_j (xi'(Q_{j+1}) - xi'(Q_j)), k = 1..r
    weighted = x[1:, None, None] * (xips[2:] - xips[1:-1])
    tails = np.cumsum(weighted[::-1], axis=0)[::-1] if r > 1 else np.zeros((0, model.m, model.m))
    lam_stack = np.concatenate([lam[None] - tails, lam[None]])
    w_l, v_l = np.linalg.eigh(lam_stack)
    if w_l[:, 0].min() <= 1e-13:
        raise SingularLambda(
            f"a multiplier ladder matrix is singular "
            f"(min eigenvalue {w_l[:, 0].min():.3e})"
        )
    lds = [0.0] + list(np.sum(np.log(w_l), axis=1))
    lam1_inv = (v_l[0] / w_l[0]) @ v_l[0].T
    hh = model.field_outer()
    t_field = (
        frob_ip(hh, lam1_inv)
        if field_term == "lambda1"
        else frob_ip(hh, _inv_as(lam, SingularLambda, "Lambda"))
    )
    t_ratio = _log_ratio_sum(lds, x, range(1, r), SingularLambda)
    # entrywise theta sums, batched over the chain
    s_theta = np.zeros(r + 1)
    for pp, beta in model.terms:
        bb = np.outer(beta, beta)
        s_theta += (pp - 1) * np.sum(bb[None] * mats**pp, axis=(1, 2))
    t_theta = float(np.sum(x[1:] * (s_theta[2:] - s_theta[1:-1])))
    value = (
        t_field
        + frob_ip(lam, p.qs[-1])
        - model.m
        - lds[r]
        + t_ratio
        + frob_ip(xips[1], lam1_inv)
        - t_theta
    )
    return 0.5 * value


def parisi_ladder(model: MixedModel, lam: np.ndarray, p: DiscreteOrderParam) -> list[np.ndarray]:
    """Multiplier ladder [Lambda_1, ..., Lambda_r] induced by (lam, p)."""
    lam = as_sym(lam, "lambda")
    x = p.x
    mats = [np.zeros((model.m, model.m))] + list(p.qs)
    xips = [model.xi(q, order=1) for q in mats]
    out: list[np.ndarray] = [lam]
    acc = np.zeros((model.m, model.m))
    for k in range(p.r - 1, 0, -1):
        acc = acc + x[k] * (xips[k + 1] - xips[k])
        out.append(lam - acc)
    out.reverse()
    return out


def cs_increment_sums(p: DiscreteOrderParam) -> list[np.ndarray]:
    """Cumulative increment matrices [D_1, ..., D_{r-1}] of a scheme."""
    m = p.m_dim
    mats = [np.zeros((m, m))] + list(p.qs)
    out: list[np.ndarray] = []
    acc = np.zeros((m, m))
    for k in range(p.r - 1, 0, -1):
        acc = acc + p.x[k] * (mats[k + 1] - mats[k])
        out.append(acc.copy())
    out.reverse()
    return out


# ---------------------------------------------------------------------------
# quadrature grid
# ---------------------------------------------------------------------------


@dataclass
class _Block:
    t0: float
    t1: float
    n: int
    delta: float
    tn: np.ndarray
    phi_n: np.ndarray
    dphi_n: np.ndarray
    mval: float
    seg: PathSegment


class _Grid:
    """Breakpoint-aligned composite-Simpson grid over a path (and measure).

    Each block lies inside a single path segment and a single constant
    piece of the measure, and carries an even number of uniform panels.
    """

    def __init__(
        self,
        path: MatrixPath,
        measure: MeasureFn | None,
        extra_breaks=(),
        n_quad: int = 2001,
    ):
        self.path = path
        t_end = path.t_end
        breaks = [path.knots]
        if measure is not None:
            breaks.append(measure.ts)
        breaks.append(np.asarray(list(extra_breaks) + [0.0, t_end], dtype=float))
        pts = np.unique(np.concatenate(breaks))
        pts = pts[(pts > -_KNOT_TOL) & (pts < t_end + _KNOT_TOL)]
        pts[0] = 0.0
        pts[-1] = t_end
        keep = np.concatenate([[True], np.diff(pts) > _KNOT_TOL])
        pts = pts[keep]
        if pts[-1] < t_end - _KNOT_TOL:
            pts = np.append(pts, t_end)
        lengths = np.diff(pts)
        n_total = max(int(n_quad) - 1, 8)
        self.blocks: list[_Block] = []
        for lo, hi, ell in zip(pts[:-1], pts[1:], lengths):
            n = int(round(n_total * ell / t_end))
            n = max(2, n + (n % 2))
            seg = path._segment_at(0.5 * (lo + hi))
            tn = np.linspace(lo, hi, n + 1)
            mval = measure.value(0.5 * (lo + hi)) if measure is not None else 0.0
            self.blocks.append(
                _Block(
                    t0=float(lo),
                    t1=float(hi),
                    n=n,
                    delta=(hi - lo) / n,
                    tn=tn,
                    phi_n=seg.phi(tn),
                    dphi_n=seg.dphi(tn),
                    mval=mval,
                    seg=seg,
                )
            )

    # -- exact running matrix integrals --------------------------------------

    def _telescope(self, block_incs) -> tuple[list[np.ndarray], np.ndarray]:
        """Assemble prefix tables from per-block panel increments."""
        m = self.path.m_dim
        offset = np.zeros((m, m))
        tables = []
        for inc in block_incs:
            table = np.concatenate([offset[None], offset[None] + np.cumsum(inc, axis=0)])
            tables.append(table)
            offset = table[-1]
        return tables, offset

    def measure_path_prefix(self) -> tuple[list[np.ndarray], np.ndarray]:
        """Tables of int_0^t mval dPhi at the grid nodes (exact: the measure
        is constant per block, so each panel contributes mval * delta Phi)."""
        incs = [b.mval * (b.phi_n[1:] - b.phi_n[:-1]) for b in self.blocks]
        return self._telescope(incs)

    def measure_path_suffix(self) -> tuple[list[np.ndarray], np.ndarray]:
        tables, total = self.measure_path_prefix()
        return [total[None] - tbl for tbl in tables], total

    def measure_xi1_suffix(self, model: MixedModel) -> tuple[list[np.ndarray], np.ndarray]:
        """Tables of int_t^end mval d[xi'(Phi)] (exact per panel, since the
        integrand mval xi''(Phi) .* Phi' is the derivative of mval xi'(Phi))."""
        incs = []
        for b in self.blocks:
            xp = _xi_stack(model, b.phi_n, 1)
            incs.append(b.mval * (xp[1:] - xp[:-1]))
        tables, total = self._telescope(incs)
        return [total[None] - tbl for tbl in tables], total

    # -- outer scalar integrals ---------------------------------------------

    def _weights(self, b: _Block) -> np.ndarray:
        w = np.full(b.n + 1, 2.0)
        w[1::2] = 4.0
        w[0] = w[-1] = 1.0
        return w * (b.delta / 3.0)

    def integrate(self, values: list[np.ndarray], lo: float = 0.0, hi: float | None = None) -> float:
        """Composite Simpson of per-block node values over [lo, hi]."""
        if hi is None:
            hi = self.path.t_end
        total = 0.0
        for b, v in zip(self.blocks, values):
            if b.t0 >= lo - _KNOT_TOL and b.t1 <= hi + _KNOT_TOL:
                total += float(self._weights(b) @ v)
        return total


def _xi_stack(model: MixedModel, stack: np.ndarray, order: int) -> np.ndarray:
    """Batched Hadamard derivative of the covariance over a matrix stack."""
    out = np.zeros_like(stack)
    for p, beta in model.terms:
        k = p - order
        if k < 0:
            continue
        coeff = math.perm(p, order)
        bb = np.outer(beta, beta)
        out += coeff * bb[None] * (np.ones_like(stack) if k == 0 else stack**k)
    return out


def _stack_inv_pd(stack: np.ndarray, err, what: str) -> np.ndarray:
    """Batched eigendecomposition-backed inverse with a PD check."""
    w, v = np.linalg.eigh(stack)
    scale = 1.0 + np.linalg.norm(stack, axis=(1, 2))
    bad = w[:, 0] <= 1e-12 * scale
    if bad.any():
        raise err(
            f"{what} loses positive definiteness (min eigenvalue {w[:, 0].min():.3e})"
        )
    return (v / w[:, None, :]) @ np.swapaxes(v, 1, 2)


def _logdet_ratio(b0: np.ndarray, diff: np.ndarray, err, what: str) -> float:
    """log|B0 + diff| - log|B0| through log1p of the eigenvalues of the
    relative perturbation; stable when the difference is tiny."""
    w0, v0 = np.linalg.eigh(b0)
    if w0[0] <= 1e-12 * (1.0 + float(np.linalg.norm(b0))):
        raise err(f"{what} loses positive definiteness (min eigenvalue {w0[0]:.3e})")
    isq = (v0 / np.sqrt(w0)) @ v0.T
    mu = np.linalg.eigvalsh(symmetrize(isq @ diff @ isq))
    if mu[0] <= -1.0 + 1e-14:
        raise err(f"{what} loses positive definiteness across a block")
    return float(np.sum(np.log1p(mu)))


def _resolvent_outer(grid: _Grid, tables, gaps, lo, hi, err, what, direction: float) -> float:
    """Exact integral of <B(t)^{-1}, dG(t)> over [lo, hi] when, per block,
    B' = direction * mval * G' with G' given by per-block endpoint gaps.

    On blocks with mval > 0 the integrand is a total log-determinant
    derivative and the block contributes direction/mval * delta log|B|;
    on mval = 0 blocks B is constant and the contribution is
    <B^{-1}, delta G>. B must be monotone in the PSD order (true for all
    uses: suffix/prefix accumulations of PSD increments), so checking
    positive definiteness at the block ends covers the block.
    """
    total = 0.0
    for b, tbl, gap in zip(grid.blocks, tables, gaps):
        if b.t0 < lo - _KNOT_TOL or b.t1 > hi + _KNOT_TOL:
            continue
        if b.mval > 0.0:
            diff = direction * b.mval * gap
            total += direction * _logdet_ratio(tbl[0], diff, err, what) / b.mval
        else:
            inv = _stack_inv_pd(tbl[:1], err, what)[0]
            total += float(np.sum(inv * gap))
    return total


# ---------------------------------------------------------------------------
# continuous functionals
# ---------------------------------------------------------------------------


def _require_t_x(x: MeasureFn, t_end: float) -> float:
    t_x = x.t_x
    if t_x is None or t_x >= t_end - _KNOT_TOL:
        raise InvalidThat(
            "the measure never reaches 1 before the end of the path; "
            "the continuous Crisanti-Sommers form is undefined"
        )
    return t_x


def continuous_cs(
    model: MixedModel,
    x: MeasureFn,
    path: MatrixPath,
    t_hat: float | None = None,
    n_quad: int = 2001,
) -> float:
    """Continuous Crisanti-Sommers functional

        1/2 [ int_0^m x <xi'(Phi)+hh^T, Phi'> dt + log|Phi(m)-Phi(T)|
              + int_0^T <hat{Phi}(t)^{-1}, Phi'(t)> dt ],

    with hat{Phi}(t) = int_t^m x dPhi and T any point in (t_x, m); the value
    is independent of T. Default T sits midway between t_x and m.
    """
    t_end = path.t_end
    t_x = _require_t_x(x, t_end)
    if t_hat is None:
        t_hat = t_x + 0.5 * (t_end - t_x)
    if not (t_x - _KNOT_TOL < t_hat < t_end - _KNOT_TOL):
        raise InvalidThat(f"T must lie in ({t_x}, {t_end}), got {t_hat}")
    grid = _Grid(path, x, extra_breaks=[t_hat, t_x], n_quad=n_quad)
    hh = model.field_outer()

    vals1 = []
    for b in grid.blocks:
        integ = _xi_stack(model, b.phi_n, 1) + hh[None]
        vals1.append(b.mval * np.einsum("nij,nij->n", integ, b.dphi_n))
    i1 = grid.integrate(vals1)

    gap = path.endpoint - path.phi(t_hat)
    i2 = _logdet_as(gap, SingularPath, "Phi(m) - Phi(T)")

    hat_tables, _ = grid.measure_path_suffix()
    gaps = [b.phi_n[-1] - b.phi_n[0] for b in grid.blocks]
    i3 = _resolvent_outer(
        grid, hat_tables, gaps, 0.0, t_hat, SingularPath, "hat{Phi}", direction=-1.0
    )
    return 0.5 * (i1 + i2 + i3)


def continuous_cs_rewritten(
    model: MixedModel,
    x: MeasureFn,
    path: MatrixPath,
    n_quad: int = 2001,
) -> float:
    """Integration-by-parts form of the continuous Crisanti-Sommers value:

        1/2 [ <xi'(Phi(m))+hh^T, check{Phi}(m)>
              - int_0^m <check{Phi}(t), xi''(Phi(t)) .* Phi'(t)> dt
              + int_0^{t_x} <(check{Phi}(m)-check{Phi}(t))^{-1}, Phi'(t)> dt
              + log|Phi(m) - Phi(t_x)| ],

    with check{Phi}(t) = int_0^t x dPhi. Agrees with `continuous_cs`.
    """
    t_end = path.t_end
    t_x = _require_t_x(x, t_end)
    grid = _Grid(path, x, extra_breaks=[t_x], n_quad=n_quad)
    hh = model.field_outer()

    check_tables, check_total = grid.measure_path_prefix()
    i1 = frob_ip(_xi_stack(model, path.endpoint[None], 1)[0] + hh, check_total)

    vals2 = []
    for b, tbl in zip(grid.blocks, check_tables):
        integ = _xi_stack(model, b.phi_n, 2) * b.dphi_n
        vals2.append(-np.einsum("nij,nij->n", tbl, integ))
    i2 = grid.integrate(vals2)

    hat_tables = [check_total[None] - tbl for tbl in check_tables]
    gaps = [b.phi_n[-1] - b.phi_n[0] for b in grid.blocks]
    i3 = _resolvent_outer(
        grid, hat_tables, gaps, 0.0, t_x, SingularPath, "hat{Phi}", direction=-1.0
    )

    i4 = _logdet_as(path.endpoint - path.phi(t_x), SingularPath, "Phi(m) - Phi(t_x)")
    return 0.5 * (i1 + i2 + i3 + i4)


def continuous_parisi(
    model: MixedModel,
    x: MeasureFn,
    lam: np.ndarray,
    path: MatrixPath,
    n_quad: int = 2001,
) -> float:
    """Continuous Parisi functional

        1/2 [ int <xi''(Phi) .* Phi', (lam - D(q))^{-1}> dq
              + <hh^T, (lam - D(0))^{-1}>
              - int x <xi''(Phi) .* Phi, Phi'> dq
              + <lam, Q> - m - log|lam| ],

    with D(q) = int_q^m x xi''(Phi) .* Phi' ds.
    """
    lam = as_sym(lam, "lambda")
    grid = _Grid(path, x, n_quad=n_quad)

    d_tables, d_total = grid.measure_xi1_suffix(model)
    shifted = [lam[None] - tbl for tbl in d_tables]
    xi1_gaps = []
    for b in grid.blocks:
        xp = _xi_stack(model, b.phi_n[[0, -1]], 1)
        xi1_gaps.append(xp[1] - xp[0])
    i1 = _resolvent_outer(
        grid,
        shifted,
        xi1_gaps,
        0.0,
        path.t_end,
        SingularLambda,
        "lam - D(q)",
        direction=1.0,
    )

    resolvent0 = _stack_inv_pd((lam - d_total)[None], SingularLambda, "lam - D(0)")[0]
    i2 = frob_ip(model.field_outer(), resolvent0)

    vals3 = []
    for b in grid.blocks:
        integ = _xi_stack(model, b.phi_n, 2) * b.phi_n
        vals3.append(-b.mval * np.einsum("nij,nij->n", integ, b.dphi_n))
    i3 = grid.integrate(vals3)

    i4 = frob_ip(lam, path.endpoint) - model.m - _logdet_as(lam, SingularLambda, "lambda")
    return 0.5 * (i1 + i2 + i3 + i4)


def gse_functional(model: MixedModel, triple: ZeroTempTriple, n_quad: int = 2001) -> float:
    """Zero-temperature ground-state functional

        1/2 [ <xi'(Q)+hh^T, L>
              + int_0^m <(L - A(t))^{-1}, Phi'(t)> dt
              - int_0^m <xi''(Phi(t)) .* Phi'(t), A(t)> dt ],

    with A(t) = int_0^t alpha dPhi and Q the path endpoint.
    """
    path = triple.path
    grid = _Grid(path, triple.alpha, n_quad=n_quad)
    q = path.endpoint
    i1 = frob_ip(model.xi(q, order=1) + model.field_outer(), triple.L)

    a_tables, _ = grid.measure_path_prefix()
    shifted = [triple.L[None] - tbl for tbl in a_tables]
    gaps = [b.phi_n[-1] - b.phi_n[0] for b in grid.blocks]
    i2 = _resolvent_outer(
        grid, shifted, gaps, 0.0, path.t_end, InfeasibleTriple, "L - A(t)", direction=-1.0
    )
    vals3 = []
    for b, tbl in zip(grid.blocks, a_tables):
        integ = _xi_stack(model, b.phi_n, 2) * b.dphi_n
        vals3.append(-np.einsum("nij,nij->n", integ, tbl))
    i3 = grid.integrate(vals3)
    return 0.5 * (i1 + i2 + i3)
