"""Direct maximization oracle for the sampled Gaussian Hamiltonian.

Draws the Gaussian coupling tensors of the mixed p-spin energy at small
system size N, maximizes the energy per site over vector spin
configurations with the self-overlap constraint imposed exactly, and
extrapolates in N. This is the ground-truth side of the variational
cross-check: it never touches the functionals.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    IllConditionedFit,
    MemoryBudgetExceeded,
    NonPDConstraint,
    VecspinError,
)
from .linalg import min_eig, sym_inv_sqrt, sym_sqrt, symmetrize
from .model import MixedModel

__all__ = [
    "HamiltonianSample",
    "ConstrainedConfig",
    "sample_hamiltonian",
    "maximize_energy",
    "extrapolate_gse",
]


def _contract_all(g_flat: np.ndarray, s: np.ndarray, p: int, n: int) -> float:
    """Full contraction sum g_{i1..ip} s_{i1} ... s_{ip}."""
    v = g_flat
    for _ in range(p):
        v = v.reshape(-1, n) @ s
    return float(v)


def _contract_grad(g_flat: np.ndarray, s: np.ndarray, p: int, n: int) -> np.ndarray:
    """Gradient of the full contraction: sum over slots of the partial
    contractions leaving one index free."""
    if p == 2:
        g = g_flat.reshape(n, n)
        return g @ s + g.T @ s
    g = g_flat.reshape((n,) * p)
    total = np.zeros(n)
    for k in range(p):
        v = np.moveaxis(g, k, 0).reshape(n, -1)
        for _ in range(p - 1):
            v = (v.reshape(n, -1, n) @ s).reshape(n, -1)
        total += v[:, 0]
    return total


@dataclass
class HamiltonianSample:
    """Frozen disorder realization of the mixed p-spin energy at size N.

    One coupling tensor per interaction order p, shared across the m
    copies; the per-copy energies then have covariance
    E[H^k(s1) H^l(s2)] = N xi_{kl}(overlap), matching the model.
    """

    model: MixedModel
    n_sites: int
    p_cut: int
    seed: int
    tensors: dict[int, np.ndarray]

    def energy_components(self, sigma: np.ndarray) -> np.ndarray:
        """Random energies of the m copies (no field), sigma of shape (m, N)."""
        sigma = np.asarray(sigma, dtype=float)
        n = self.n_sites
        out = np.zeros(self.model.m)
        for p, g in self.tensors.items():
            scale = n ** (-(p - 1) / 2.0)
            beta = self.model.beta_of(p)
            for j in range(self.model.m):
                if beta[j] == 0.0:
                    continue
                out[j] += beta[j] * scale * _contract_all(g, sigma[j], p, n)
        return out

    def energy(self, sigma: np.ndarray) -> float:
        """Total energy including the external field term."""
        sigma = np.asarray(sigma, dtype=float)
        field = float(self.model.h @ sigma.sum(axis=1))
        return float(self.energy_components(sigma).sum()) + field

    def grad(self, sigma: np.ndarray) -> np.ndarray:
        """Gradient of `energy` with respect to sigma, shape (m, N)."""
        sigma = np.asarray(sigma, dtype=float)
        n = self.n_sites
        out = np.zeros_like(sigma)
        for p, g in self.tensors.items():
            scale = n ** (-(p - 1) / 2.0)
            beta = self.model.beta_of(p)
            for j in range(self.model.m):
                if beta[j] == 0.0:
                    continue
                out[j] += beta[j] * scale * _contract_grad(g, sigma[j], p, n)
        out += self.model.h[:, None]
        return out


def sample_hamiltonian(
    model: MixedModel,
    n_sites: int,
    p_cut: int = 4,
    seed: int = 0,
    memory_budget: int = 2**31,
) -> HamiltonianSample:
    """Draw the coupling tensors for all interaction orders up to p_cut.

    Orders above p_cut present in the model are dropped with a warning
    (dense tensors beyond fourth order are not affordable). Identical
    (model, n_sites, seed) reproduce bit-identical tensors.

    Raises MemoryBudgetExceeded before allocating if the tensors would not
    fit the budget.
    """
    ps = sorted({p for p, beta in model.terms if np.any(beta != 0.0)})
    dropped = [p for p in ps if p > p_cut]
    if dropped:
        warnings.warn(
            f"interaction orders {dropped} exceed p_cut={p_cut} and are "
            "dropped from the sampled energy",
            stacklevel=2,
        )
    ps = [p for p in ps if p <= p_cut]
    footprint = sum(8 * n_sites**p for p in ps)
    if footprint > memory_budget:
        raise MemoryBudgetExceeded(
            f"coupling tensors need {footprint} bytes (> {memory_budget})",
            footprint_bytes=footprint,
        )
    rng = np.random.default_rng([seed, n_sites])
    tensors = {p: rng.standard_normal(n_sites**p) for p in ps}
    return HamiltonianSample(
        model=model, n_sites=n_sites, p_cut=p_cut, seed=seed, tensors=tensors
    )


@dataclass
class ConstrainedConfig:
    """Configuration with the self-overlap constraint imposed exactly:
    sigma = Q^{1/2} W with W an orthogonal frame of row norm sqrt(N)."""

    w: np.ndarray
    sigma: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        n = self.w.shape[1]
        gram = self.w @ self.w.T / n
        if np.abs(gram - np.eye(self.w.shape[0])).max() > 1e-10:
            raise VecspinError("frame rows are not orthonormal at scale sqrt(N)")
        overlap = self.sigma @ self.sigma.T / n
        if np.linalg.norm(overlap - self.q) > 1e-9:
            raise VecspinError("self-overlap deviates from the constraint")


def _polar_frame(mat: np.ndarray, n: int) -> np.ndarray:
    """Nearest frame with rows of norm sqrt(n) and orthogonal rows."""
    s = symmetrize(mat @ mat.T)
    return math.sqrt(n) * (sym_inv_sqrt(s) @ mat)


def maximize_energy(
    sample: HamiltonianSample,
    q: np.ndarray,
    restarts: int = 8,
    max_iters: int = 300,
    seed: int | None = None,
) -> tuple[float, ConstrainedConfig]:
    """Maximize energy/N over configurations with self-overlap exactly q.

    Projected gradient ascent on the frame W (rows orthogonal, norm
    sqrt(N)) with polar retraction and backtracking line search; sigma is
    Q^{1/2} W. Accepted iterations never decrease the objective. Returns
    the best value over restarts and the achieving configuration.
    """
    q = symmetrize(np.asarray(q, dtype=float))
    if min_eig(q) <= 1e-12:
        raise NonPDConstraint("the overlap constraint must be positive definite")
    m = sample.model.m
    n = sample.n_sites
    if q.shape != (m, m):
        raise VecspinError(f"constraint must be {m}x{m}")
    q_half = sym_sqrt(q)
    if seed is None:
        seed = sample.seed
    best_val = -np.inf
    best_w = None
    for rs in range(restarts):
        rng = np.random.default_rng([seed, 7_777, rs])
        w = _polar_frame(rng.standard_normal((m, n)), n)
        sigma = q_half @ w
        val = sample.energy(sigma) / n
        step = 1.0
        for _ in range(max_iters):
            g_w = q_half @ sample.grad(sigma) / n
            sym_part = symmetrize(g_w @ w.T) / n
            direction = g_w - sym_part @ w
            d_norm = np.linalg.norm(direction)
            if d_norm < 1e-12:
                break
            improved = False
            for _ in range(40):
                w_try = _polar_frame(w + step * direction, n)
                val_try = sample.energy(q_half @ w_try) / n
                if val_try > val + 1e-14:
                    improved = True
                    break
                step *= 0.5
            if not improved:
                break
            w, val = w_try, val_try
            sigma = q_half @ w
            step = min(step * 2.0, 1e3)
        if val > best_val:
            best_val, best_w = val, w
    assert best_w is not None
    sigma = q_half @ best_w
    return best_val, ConstrainedConfig(w=best_w, sigma=sigma, q=q)


def extrapolate_gse(
    values, exponent: float = -2.0 / 3.0
) -> tuple[float, float]:
    """Least-squares fit e(N) = e_inf + c N^exponent.

    `values` is a sequence of (N, energy) pairs with at least three
    distinct sizes. Returns (e_inf, root-mean-square fit residual). The
    default exponent is the edge-fluctuation scale of the pair-interaction
    model; it is exposed for mixed models.
    """
    pts = [(float(n), float(e)) for n, e in values]
    ns = np.array([p[0] for p in pts])
    es = np.array([p[1] for p in pts])
    if len(set(ns.tolist())) < 3:
        raise IllConditionedFit("need at least three distinct system sizes")
    design = np.column_stack([np.ones_like(ns), ns**exponent])
    if np.linalg.cond(design) > 1e8:
        raise IllConditionedFit("extrapolation design matrix is ill conditioned")
    coef, *_ = np.linalg.lstsq(design, es, rcond=None)
    resid = float(np.sqrt(np.mean((design @ coef - es) ** 2)))
    return float(coef[0]), resid
