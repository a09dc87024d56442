"""Shared generators for random models and feasible order parameters."""

from __future__ import annotations

import numpy as np
import pytest

from vecspin.functionals import DiscreteOrderParam
from vecspin.linalg import sym_inv_sqrt, sym_sqrt, symmetrize
from vecspin.model import MixedModel


def random_corr(rng: np.random.Generator, m: int, pd_boost: float = 0.35) -> np.ndarray:
    """Random unit-diagonal PD matrix (correlation-factor rows blended with
    the identity for a definiteness margin)."""
    g = rng.normal(size=(m, m))
    w = g / np.linalg.norm(g, axis=1, keepdims=True)
    return symmetrize((1.0 - pd_boost) * (w @ w.T) + pd_boost * np.eye(m))


def random_even_model(
    rng: np.random.Generator,
    m: int,
    field_scale: float = 0.3,
    with_p4: bool = True,
) -> MixedModel:
    terms = [(2, rng.uniform(0.25, 0.8, m))]
    if with_p4:
        terms.append((4, rng.uniform(0.15, 0.5, m)))
    h = rng.uniform(0.0, field_scale, m) if field_scale > 0 else np.zeros(m)
    return MixedModel(m=m, terms=tuple(terms), h=h)


def random_scheme(
    rng: np.random.Generator,
    m: int,
    r: int,
    q: np.ndarray | None = None,
) -> DiscreteOrderParam:
    """Random feasible scheme with PD increments, final level pinned at 1."""
    if q is None:
        q = random_corr(rng, m)
    raw = []
    for _ in range(r):
        v = rng.normal(size=(m, m))
        raw.append(rng.uniform(0.3, 1.0) * (v @ v.T + 0.25 * np.eye(m)))
    total = symmetrize(sum(raw))
    ridge = sym_sqrt(q) @ sym_inv_sqrt(total)
    incs = [symmetrize(ridge @ s @ ridge.T) for s in raw]
    qs = []
    acc = np.zeros((m, m))
    for s in incs[:-1]:
        acc = acc + s
        qs.append(acc.copy())
    qs.append(q)
    jumps = rng.uniform(0.25, 1.0, r - 1)
    x = np.concatenate([[0.0], np.cumsum(jumps) / np.sum(jumps)])
    return DiscreteOrderParam(x=x, qs=tuple(qs))


def scalar_instance(rng: np.random.Generator, r: int | None = None):
    """Random scalar model + scheme, returned both as plain floats (for the
    oracles) and as package objects."""
    if r is None:
        r = int(rng.integers(2, 4))
    coeffs = [(2, float(rng.uniform(0.3, 1.0)))]
    if rng.uniform() < 0.7:
        coeffs.append((4, float(rng.uniform(0.2, 0.7))))
    h = float(rng.uniform(0.0, 0.5)) if rng.uniform() < 0.5 else 0.0
    qs = np.sort(rng.uniform(0.08, 0.85, r - 1))
    qs = [float(v) for v in qs] + [1.0]
    gaps = np.diff([0.0] + qs)
    if gaps.min() < 0.05:  # keep increments comfortably nondegenerate
        qs = [float((k + 1) / r * 0.7) for k in range(r - 1)] + [1.0]
    jumps = rng.uniform(0.25, 1.0, r - 1)
    xs = [0.0] + list(np.cumsum(jumps) / np.sum(jumps))
    model = MixedModel(
        m=1,
        terms=tuple((p, np.array([b])) for p, b in coeffs),
        h=np.array([h]),
    )
    scheme = DiscreteOrderParam(
        x=np.array(xs), qs=tuple(np.array([[v]]) for v in qs)
    )
    return coeffs, h, xs, qs, model, scheme


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
