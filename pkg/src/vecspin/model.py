"""Mixed even p-spin covariance models.

A model is the entrywise power series

    xi_{ij}(s) = sum_p beta_p(i) beta_p(j) s^p,      p >= 2,

applied entrywise to an m x m matrix argument, together with an external
field vector h. Hadamard derivatives up to fourth order and the auxiliary
function theta(s) = s xi'(s) - xi(s) are available in closed form.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, DomainError, InvalidTruncation, OrderOutOfRange
from .linalg import as_sym, hadamard_pow, symmetrize

__all__ = ["MixedModel", "cosh_model", "model_from_dict", "model_to_dict"]

#: matrix arguments of xi live on the correlation scale; allow mild overshoot
_ENTRY_BOUND = 1.2


@dataclass(frozen=True)
class MixedModel:
    """Mixed even p-spin covariance with m coupled copies.

    Parameters
    ----------
    m : number of spin components (copies).
    terms : sequence of (p, beta_p) with p >= 2 and beta_p a length-m vector.
    h : external field vector, length m.
    series_tail_tol : certified tail tolerance for truncated transcendental
        series (used by builders such as `cosh_model`).
    """

    m: int
    terms: tuple[tuple[int, np.ndarray], ...]
    h: np.ndarray = None  # type: ignore[assignment]
    series_tail_tol: float = 1e-12

    def __post_init__(self):
        if self.m < 1:
            raise DimensionMismatch(f"m must be >= 1, got {self.m}")
        clean = []
        for p, beta in self.terms:
            p = int(p)
            if p < 2:
                raise DimensionMismatch(f"series exponents must be >= 2, got p={p}")
            beta = np.asarray(beta, dtype=float).reshape(-1)
            if beta.shape != (self.m,):
                raise DimensionMismatch(
                    f"beta_{p} must have length m={self.m}, got {beta.shape}"
                )
            if not np.all(np.isfinite(beta)):
                raise DimensionMismatch(f"beta_{p} has non-finite entries")
            beta.setflags(write=False)
            clean.append((p, beta))
        clean.sort(key=lambda t: t[0])
        object.__setattr__(self, "terms", tuple(clean))
        h = np.zeros(self.m) if self.h is None else np.asarray(self.h, dtype=float)
        h = h.reshape(-1)
        if h.shape != (self.m,):
            raise DimensionMismatch(f"h must have length m={self.m}, got {h.shape}")
        h = h.copy()
        h.setflags(write=False)
        object.__setattr__(self, "h", h)
        odd = [p for p, beta in self.terms if p % 2 == 1 and np.any(beta != 0.0)]
        if odd:
            warnings.warn(
                f"odd-p interactions {odd} are outside the even-model guarantees",
                stacklevel=2,
            )

    # -- basic structure ---------------------------------------------------

    @property
    def max_p(self) -> int:
        return max((p for p, _ in self.terms), default=2)

    def is_even(self) -> bool:
        return all(p % 2 == 0 for p, beta in self.terms if np.any(beta != 0.0))

    def beta_of(self, p: int) -> np.ndarray:
        """Coefficient vector of exponent p (zeros if absent)."""
        for q, beta in self.terms:
            if q == p:
                return beta
        return np.zeros(self.m)

    def field_outer(self) -> np.ndarray:
        """Rank-one field matrix h h^T."""
        return np.outer(self.h, self.h)

    def scaled(self, beta: float) -> "MixedModel":
        """Model at inverse temperature beta: covariance beta^2 xi, field beta h."""
        return MixedModel(
            m=self.m,
            terms=tuple((p, beta * b) for p, b in self.terms),
            h=beta * self.h,
            series_tail_tol=self.series_tail_tol,
        )

    # -- evaluation --------------------------------------------------------

    def _check_arg(self, a: np.ndarray) -> np.ndarray:
        a = as_sym(a, "xi argument")
        if a.shape[0] != self.m:
            raise DimensionMismatch(
                f"argument is {a.shape[0]}x{a.shape[0]}, model has m={self.m}"
            )
        if np.abs(a).max(initial=0.0) > _ENTRY_BOUND:
            raise DomainError(
                f"entries exceed the correlation-scale bound {_ENTRY_BOUND}",
                offending_eigenvalue=float(np.abs(a).max()),
            )
        return a

    def xi(self, a: np.ndarray, order: int = 0) -> np.ndarray:
        """Hadamard derivative of the covariance.

        Returns sum_p p!/(p-order)! (beta_p x beta_p) .* a^{.(p-order)},
        dropping terms with p < order.
        """
        if order not in (0, 1, 2, 3, 4):
            raise OrderOutOfRange(f"order must be in 0..4, got {order}")
        a = self._check_arg(a)
        out = np.zeros((self.m, self.m))
        for p, beta in self.terms:
            k = p - order
            if k < 0:
                continue
            coeff = math.perm(p, order)
            out += coeff * np.outer(beta, beta) * hadamard_pow(a, k)
        return symmetrize(out)

    def theta(self, a: np.ndarray) -> np.ndarray:
        """Entrywise theta(s) = s xi'(s) - xi(s) = sum_p (p-1) b_i b_j s^p."""
        a = self._check_arg(a)
        out = np.zeros((self.m, self.m))
        for p, beta in self.terms:
            out += (p - 1) * np.outer(beta, beta) * hadamard_pow(a, p)
        return symmetrize(out)


def cosh_model(
    beta: float,
    m: int,
    q_scale_hint: float,
    truncation_order: int = 16,
    series_tail_tol: float = 1e-12,
) -> MixedModel:
    """Even model reproducing (beta x beta) .* (cosh(a) - 1) entrywise.

    Coefficients are beta / sqrt((2k)!) for 2k <= truncation_order, so the
    entrywise series is beta^2 * sum_k a^{2k} / (2k)!. The truncation is
    certified: the dropped tail at |a| <= q_scale_hint is bounded by
    beta^2 * q_scale_hint^(T+2) / (T+2)! per entry.

    Raises
    ------
    InvalidTruncation
        If truncation_order is odd or < 4, or the tail bound exceeds
        series_tail_tol.
    """
    if beta <= 0:
        raise InvalidTruncation(f"beta must be positive, got {beta}")
    if truncation_order < 4 or truncation_order % 2 != 0:
        raise InvalidTruncation(
            f"truncation_order must be even and >= 4, got {truncation_order}"
        )
    tail = beta**2 * q_scale_hint ** (truncation_order + 2) / math.factorial(
        truncation_order + 2
    )
    if tail > series_tail_tol:
        raise InvalidTruncation(
            f"tail bound {tail:.3e} at |a|={q_scale_hint} exceeds {series_tail_tol:.3e}; "
            "increase truncation_order"
        )
    terms = tuple(
        (p, np.full(m, beta / math.sqrt(math.factorial(p))))
        for p in range(2, truncation_order + 1, 2)
    )
    return MixedModel(m=m, terms=terms, h=np.zeros(m), series_tail_tol=series_tail_tol)


def model_to_dict(model: MixedModel) -> dict:
    """JSON-ready description {"m", "terms", "h"}."""
    return {
        "m": model.m,
        "terms": [{"p": p, "beta": list(map(float, b))} for p, b in model.terms],
        "h": list(map(float, model.h)),
        "series_tail_tol": model.series_tail_tol,
    }


def model_from_dict(doc: dict) -> MixedModel:
    """Inverse of `model_to_dict`; validates shapes."""
    try:
        m = int(doc["m"])
        terms = tuple((int(t["p"]), np.asarray(t["beta"], dtype=float)) for t in doc["terms"])
    except (KeyError, TypeError) as exc:
        raise DimensionMismatch(f"malformed model document: {exc}") from exc
    h = np.asarray(doc.get("h", np.zeros(m)), dtype=float)
    return MixedModel(
        m=m,
        terms=terms,
        h=h,
        series_tail_tol=float(doc.get("series_tail_tol", 1e-12)),
    )
