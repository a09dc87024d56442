"""Symmetric-matrix functional calculus.

Everything operates on small dense symmetric matrices (the number of spin
components m is a handful). Spectral functions go through a single
eigendecomposition; Hadamard operations are entrywise. All functions are
pure and return fresh arrays.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import DimensionMismatch, DomainError, NotPositiveDefinite

__all__ = [
    "symmetrize",
    "as_sym",
    "eig_sym",
    "sym_func",
    "sym_sqrt",
    "sym_inv_sqrt",
    "sym_inv",
    "sym_power",
    "logdet",
    "hadamard_pow",
    "frob_ip",
    "sum_all",
    "min_eig",
    "fro_norm",
    "default_pd_tol",
    "is_pd",
]

#: absolute floor under which logdet refuses an eigenvalue
_LOGDET_FLOOR = 1e-13


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return the symmetric part (a + a^T) / 2 as float64."""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def as_sym(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Validate that `a` is square and numerically symmetric; return the
    exactly symmetrized copy."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {a.shape}")
    scale = 1.0 + np.abs(a).max(initial=0.0)
    if np.abs(a - a.T).max(initial=0.0) > 1e-10 * scale:
        raise DimensionMismatch(f"{name} is not symmetric")
    return symmetrize(a)


def eig_sym(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending."""
    return np.linalg.eigh(as_sym(a))


def default_pd_tol(a: np.ndarray) -> float:
    """Scale-relative positive-definiteness threshold 1e-12 * (1 + ||a||_F)."""
    return 1e-12 * (1.0 + float(np.linalg.norm(a)))


def sym_func(
    a: np.ndarray,
    f: Callable[[np.ndarray], np.ndarray],
    domain_tol: float | None = None,
) -> np.ndarray:
    """Spectral mapping V diag(f(w)) V^T of a symmetric matrix.

    Eigenvalues in [-domain_tol, 0) are clamped to 0 before applying `f`,
    absorbing the slight negative drift of numerically PSD matrices. The
    default clamp is 1e-10 * (1 + ||a||_F).

    Raises
    ------
    DomainError
        If `f` produces a non-finite value on the clamped spectrum (e.g. a
        root or log applied to a genuinely negative or zero eigenvalue).
    """
    a = as_sym(a)
    if domain_tol is None:
        domain_tol = 1e-10 * (1.0 + float(np.linalg.norm(a)))
    w, v = np.linalg.eigh(a)
    w = np.where((w < 0.0) & (w >= -domain_tol), 0.0, w)
    with np.errstate(all="ignore"):
        fw = np.asarray(f(w), dtype=float)
    if fw.shape != w.shape:
        raise DimensionMismatch("scalar function must map the spectrum elementwise")
    bad = ~np.isfinite(fw)
    if bad.any():
        lam = float(w[bad][0])
        raise DomainError(
            f"spectral function undefined at eigenvalue {lam:.6e}",
            offending_eigenvalue=lam,
        )
    return symmetrize((v * fw) @ v.T)


def sym_sqrt(a: np.ndarray, domain_tol: float | None = None) -> np.ndarray:
    """Principal PSD square root."""
    return sym_func(a, np.sqrt, domain_tol)


def sym_inv_sqrt(a: np.ndarray, domain_tol: float | None = None) -> np.ndarray:
    """Inverse principal square root of a PD matrix."""
    return sym_func(a, lambda w: 1.0 / np.sqrt(w), domain_tol)


def sym_inv(a: np.ndarray, domain_tol: float | None = None) -> np.ndarray:
    """Inverse of a symmetric matrix through its eigendecomposition."""
    return sym_func(a, lambda w: 1.0 / w, domain_tol)


def sym_power(a: np.ndarray, t: float, domain_tol: float | None = None) -> np.ndarray:
    """Real matrix power a^t of a PSD matrix."""
    return sym_func(a, lambda w: np.power(w, t), domain_tol)


def logdet(a: np.ndarray) -> float:
    """log-determinant of a symmetric positive definite matrix.

    Raises
    ------
    NotPositiveDefinite
        If the smallest eigenvalue is at or below 1e-13; the eigenvalue is
        attached to the exception.
    """
    w = np.linalg.eigvalsh(as_sym(a))
    lam_min = float(w[0])
    if lam_min <= _LOGDET_FLOOR:
        raise NotPositiveDefinite(
            f"logdet requires a positive definite matrix (min eigenvalue {lam_min:.6e})",
            min_eigenvalue=lam_min,
        )
    return float(np.sum(np.log(w)))


def hadamard_pow(a: np.ndarray, p: int) -> np.ndarray:
    """Entrywise p-th power; p = 0 gives the all-ones matrix."""
    if p < 0 or int(p) != p:
        raise DimensionMismatch(f"Hadamard power needs a nonnegative integer, got {p}")
    a = np.asarray(a, dtype=float)
    if p == 0:
        return np.ones_like(a)
    return a ** int(p)


def frob_ip(a: np.ndarray, b: np.ndarray) -> float:
    """Frobenius inner product sum_ij a_ij b_ij."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.sum(a * b))


def sum_all(a: np.ndarray) -> float:
    """Sum of all entries; equals frob_ip(a, all-ones)."""
    return float(np.sum(np.asarray(a, dtype=float)))


def min_eig(a: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(as_sym(a))[0])


def fro_norm(a: np.ndarray) -> float:
    """Frobenius norm."""
    return float(np.linalg.norm(np.asarray(a, dtype=float)))


def is_pd(a: np.ndarray, tol: float | None = None) -> bool:
    """Positive definiteness under the scale-relative threshold."""
    a = as_sym(a)
    if tol is None:
        tol = default_pd_tol(a)
    return min_eig(a) > tol
