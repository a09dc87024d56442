import math

import numpy as np
import pytest

import oracles
from conftest import random_corr, random_even_model, random_scheme, scalar_instance
from vecspin.errors import (
    DegenerateKnots,
    InfeasibleTriple,
    InvalidThat,
    MonotonicityViolation,
    SingularD,
)
from vecspin.functionals import (
    DiscreteOrderParam,
    MatrixPath,
    MeasureFn,
    PathSegment,
    ZeroTempTriple,
    alpha_weighted_increment,
    continuous_cs,
    continuous_cs_rewritten,
    continuous_parisi,
    discrete_cs,
    discrete_parisi,
    gse_functional,
    linear_path,
    sine_interpolate,
)
from vecspin.linalg import frob_ip, sym_inv
from vecspin.model import MixedModel


def pure2_scalar(beta=1.0):
    return MixedModel(m=1, terms=((2, np.array([beta])),), h=np.zeros(1))


def scalar_scheme(xs, qs):
    return DiscreteOrderParam(
        x=np.array(xs), qs=tuple(np.array([[q]]) for q in qs)
    )


# ---------------------------------------------------------------------------
# types and interpolation
# ---------------------------------------------------------------------------


def test_scheme_validation():
    with pytest.raises(MonotonicityViolation):
        scalar_scheme([0.1, 1.0], [0.3, 1.0])  # x_0 != 0
    with pytest.raises(MonotonicityViolation):
        scalar_scheme([0.0, 0.5, 0.4], [0.2, 0.5, 1.0])  # x decreasing
    with pytest.raises(MonotonicityViolation):
        scalar_scheme([0.0, 1.0], [0.7, 0.3])  # chain not monotone


def test_measure_validation():
    with pytest.raises(MonotonicityViolation):
        MeasureFn([0.0, 0.5], [0.6, 0.4])
    with pytest.raises(MonotonicityViolation):
        MeasureFn([0.0], [1.4], mode="x")
    m = MeasureFn([0.0, 0.5, 1.0], [0.0, 0.3, 1.0], mode="x")
    assert m.value(0.49) == pytest.approx(0.0)
    assert m.value(0.5) == pytest.approx(0.3)
    assert m.t_x == pytest.approx(1.0)


def test_sine_interpolation_geometry(rng):
    p = random_scheme(rng, 2, 3)
    x, path = sine_interpolate(p)
    mats = [np.zeros((2, 2))] + list(p.qs)
    ts = [float(np.trace(q)) for q in mats]
    for k in range(3):
        mid = 0.5 * (ts[k] + ts[k + 1])
        # midpoint value is the average of the knot matrices
        assert np.abs(path.phi(mid) - 0.5 * (mats[k] + mats[k + 1])).max() < 1e-12
        # derivative vanishes at the knots, so segments join smoothly
        assert np.abs(path.dphi(ts[k])).max() < 1e-10
        # knot values and the trace parametrization
        assert np.abs(path.phi(ts[k]) - mats[k]).max() < 1e-12
        assert np.trace(path.phi(ts[k])) == pytest.approx(ts[k], abs=1e-12)
    assert path.trace_residual_at_knots(x) < 1e-10
    # measure carries the levels and reaches 1
    assert x.value(0.5 * (ts[0] + ts[1])) == pytest.approx(p.x[0])
    assert x.value(path.t_end) == pytest.approx(1.0)


def test_sine_interpolation_merges_zero_increments():
    # an atom at zero overlap: Q_1 = 0 collapses the first knot
    p = scalar_scheme([0.0, 0.4, 1.0], [0.0, 0.5, 1.0])
    x, path = sine_interpolate(p)
    assert x.value(0.0) == pytest.approx(0.4)
    assert path.t_end == pytest.approx(1.0)


def test_sine_interpolation_degenerate_knots():
    qs = (np.array([[0.5, 0.0], [0.0, 0.0]]), np.array([[0.5, 0.2], [0.2, 0.0]]))
    with pytest.raises((DegenerateKnots, MonotonicityViolation)):
        p = DiscreteOrderParam(x=np.array([0.0, 1.0]), qs=qs)
        sine_interpolate(p)


def test_path_serialization_roundtrip(rng):
    p = random_scheme(rng, 2, 3)
    x, path = sine_interpolate(p)
    path2 = MatrixPath.from_dict(path.to_dict())
    x2 = MeasureFn.from_dict(x.to_dict())
    for t in np.linspace(0, path.t_end, 7):
        assert np.abs(path.phi(t) - path2.phi(t)).max() < 1e-15
        assert x.value(t) == x2.value(t)
    p2 = DiscreteOrderParam.from_dict(p.to_dict())
    model = random_even_model(rng, 2)
    assert discrete_cs(model, p2) == pytest.approx(discrete_cs(model, p), abs=1e-15)


# ---------------------------------------------------------------------------
# discrete functionals
# ---------------------------------------------------------------------------


def test_discrete_cs_scalar_example():
    model = pure2_scalar()
    p = scalar_scheme([0.0, 1.0], [0.3, 1.0])
    expect = 0.5 * (math.log(0.7) + 0.3 / 0.7 + (1 - 0.09))
    assert discrete_cs(model, p) == pytest.approx(expect, abs=1e-14)
    assert expect == pytest.approx(0.4909482423163481)


def test_discrete_cs_telescoping_collapse():
    model = MixedModel(
        m=2, terms=((2, np.array([0.7, 0.5])), (4, np.array([0.3, 0.2]))), h=np.zeros(2)
    )
    q = np.array([[1.0, 0.2], [0.2, 1.0]])
    zero = np.zeros((2, 2))
    p = DiscreteOrderParam(
        x=np.array([0.0, 0.35, 0.6]), qs=(zero, zero.copy(), q)
    )
    from vecspin.linalg import logdet, sum_all

    x_top = 0.6
    expect = 0.5 * (logdet(q) / x_top + x_top * sum_all(model.xi(q)))
    assert discrete_cs(model, p) == pytest.approx(expect, abs=1e-12)


def test_discrete_cs_rejects_singular_tail():
    model = pure2_scalar()
    with pytest.raises(SingularD):
        discrete_cs(model, scalar_scheme([0.0, 0.5, 1.0], [0.4, 1.0, 1.0]))


def test_discrete_parisi_r1_formula():
    model = MixedModel(
        m=2, terms=((2, np.array([0.6, 0.4])),), h=np.zeros(2)
    )
    q = np.array([[1.0, 0.3], [0.3, 1.0]])
    lam = np.array([[2.5, 0.2], [0.2, 2.2]])
    p = DiscreteOrderParam(x=np.array([0.0]), qs=(q,))
    from vecspin.linalg import logdet

    expect = 0.5 * (
        frob_ip(lam, q) - 2 - logdet(lam) + frob_ip(model.xi(q, 1), sym_inv(lam))
    )
    assert discrete_parisi(model, lam, p) == pytest.approx(expect, abs=1e-12)


def test_discrete_parisi_matches_cs_at_dual_multiplier():
    # at the multiplier whose ladder equals the inverted increment sums the
    # two discrete values coincide pointwise
    model = pure2_scalar()
    q = 0.3
    p = scalar_scheme([0.0, 1.0], [q, 1.0])
    lam = np.array([[1.0 / (1.0 - q) + (2.0 - 2.0 * q)]])
    cs = discrete_cs(model, p)
    assert discrete_parisi(model, lam, p) == pytest.approx(cs, abs=1e-8)


def test_discrete_parisi_field_term_variants():
    model = MixedModel(m=1, terms=((2, np.array([0.8])),), h=np.array([0.4]))
    p = scalar_scheme([0.0, 0.5, 1.0], [0.2, 0.6, 1.0])
    lam = np.array([[3.0]])
    v1 = discrete_parisi(model, lam, p, field_term="lambda1")
    v2 = discrete_parisi(model, lam, p, field_term="lambda")
    lam1 = lam[0, 0] - 0.5 * (model.xi(np.array([[0.6]]), 1) - model.xi(np.array([[0.2]]), 1))[0, 0] - (
        model.xi(np.array([[1.0]]), 1) - model.xi(np.array([[0.6]]), 1)
    )[0, 0]
    expect_gap = 0.5 * 0.16 * (1.0 / lam1 - 1.0 / 3.0)
    assert v1 - v2 == pytest.approx(expect_gap, abs=1e-12)


# ---------------------------------------------------------------------------
# continuous functionals
# ---------------------------------------------------------------------------


def test_bridge_discrete_continuous(rng):
    for m, r in [(1, 2), (2, 3), (3, 3)]:
        model = random_even_model(rng, m)
        p = random_scheme(rng, m, r)
        vd = discrete_cs(model, p)
        x, path = sine_interpolate(p)
        vc = continuous_cs(model, x, path)
        assert abs(vc - vd) <= 1e-6 * (1.0 + abs(vd))


def test_t_hat_independence(rng):
    model = random_even_model(rng, 2)
    p = random_scheme(rng, 2, 3)
    x, path = sine_interpolate(p)
    t_x, t_end = x.t_x, path.t_end
    vals = [
        continuous_cs(model, x, path, t_hat=t_x + f * (t_end - t_x))
        for f in (0.15, 0.35, 0.5, 0.7, 0.9)
    ]
    assert max(vals) - min(vals) < 1e-8


def test_invalid_t_hat():
    model = pure2_scalar()
    p = scalar_scheme([0.0, 1.0], [0.3, 1.0])
    x, path = sine_interpolate(p)
    with pytest.raises(InvalidThat):
        continuous_cs(model, x, path, t_hat=0.1)  # below t_x
    # a measure that never reaches 1 puts t_x at the end of the path
    x_low = MeasureFn([0.0, 0.3, 1.0], [0.0, 0.6, 1.0])
    bad = MeasureFn(x_low.ts[:2], x_low.vs[:2])
    with pytest.raises(InvalidThat):
        continuous_cs(model, bad, path)


def test_rewritten_form_agrees(rng):
    for m, r in [(1, 2), (2, 3)]:
        model = random_even_model(rng, m)
        p = random_scheme(rng, m, r)
        x, path = sine_interpolate(p)
        v1 = continuous_cs(model, x, path)
        v2 = continuous_cs_rewritten(model, x, path)
        assert abs(v1 - v2) < 1e-7


def test_rewritten_form_with_full_measure(rng):
    # x == 1 from the start: the resolvent integral is empty and the value
    # reduces to <xi'(Q)+hh, Q> - int <checkPhi, xi''(Phi) .* Phi'> + log|Q|
    model = random_even_model(rng, 2)
    q = random_corr(rng, 2)
    path = linear_path(q)
    x = MeasureFn([0.0], [1.0])
    v = continuous_cs_rewritten(model, x, path)
    ts = np.linspace(0.0, path.t_end, 4001)
    integrand = np.array(
        [
            frob_ip(path.phi(t), model.xi(path.phi(t), 2) * path.dphi(t))
            for t in ts
        ]
    )
    direct = 0.5 * (
        frob_ip(model.xi(q, 1) + model.field_outer(), q)
        - np.trapezoid(integrand, ts)
        + math.log(np.linalg.det(q))
    )
    assert v == pytest.approx(direct, abs=2e-6)


def test_parisi_bridge_and_duality_examples(rng):
    model = random_even_model(rng, 2)
    p = random_scheme(rng, 2, 3)
    mats = [np.zeros((2, 2))] + list(p.qs)
    floor = np.zeros((2, 2))
    for k in range(1, 3):
        floor = floor + p.x[k] * (model.xi(mats[k + 1], 1) - model.xi(mats[k], 1))
    lam = floor + sym_inv(p.qs[-1] - p.qs[-2])
    vd = discrete_parisi(model, lam, p)
    x, path = sine_interpolate(p)
    vc = continuous_parisi(model, x, lam, path)
    assert abs(vc - vd) <= 1e-6 * (1.0 + abs(vd))


def test_quadrature_doubling(rng):
    model = random_even_model(rng, 2)
    p = random_scheme(rng, 2, 3)
    x, path = sine_interpolate(p)
    v1 = continuous_cs(model, x, path, n_quad=1001)
    v2 = continuous_cs(model, x, path, n_quad=2001)
    assert abs(v1 - v2) < 1e-8
    lam = model.xi(p.qs[-1], 1) + np.eye(2)
    w1 = continuous_parisi(model, x, lam, path, n_quad=1001)
    w2 = continuous_parisi(model, x, lam, path, n_quad=2001)
    assert abs(w1 - w2) < 1e-8


# ---------------------------------------------------------------------------
# zero-temperature functional
# ---------------------------------------------------------------------------


def test_gse_alpha_zero_reduction(rng):
    model = random_even_model(rng, 2)
    q = random_corr(rng, 2)
    path = linear_path(q)
    alpha = MeasureFn([0.0], [0.0], mode="alpha")
    l_mat = 0.8 * np.eye(2) + 0.1
    triple = ZeroTempTriple(L=l_mat, alpha=alpha, path=path)
    expect = 0.5 * (
        frob_ip(model.xi(q, 1) + model.field_outer(), l_mat)
        + frob_ip(sym_inv(l_mat), q)
    )
    assert gse_functional(model, triple) == pytest.approx(expect, abs=1e-10)


def test_gse_scalar_rs_value():
    model = pure2_scalar()
    path = linear_path(np.array([[1.0]]))
    alpha = MeasureFn([0.0], [0.0], mode="alpha")
    triple = ZeroTempTriple(L=np.array([[1 / math.sqrt(2)]]), alpha=alpha, path=path)
    assert gse_functional(model, triple) == pytest.approx(math.sqrt(2), abs=1e-12)


def test_triple_feasibility_enforced():
    path = linear_path(np.array([[1.0]]))
    alpha = MeasureFn([0.0], [2.0], mode="alpha")
    # integral(alpha dPhi) = 2 > L
    with pytest.raises(InfeasibleTriple):
        ZeroTempTriple(L=np.array([[1.0]]), alpha=alpha, path=path)


def test_alpha_weighted_increment_exact():
    path = linear_path(np.array([[1.0]]))
    alpha = MeasureFn([0.0, 0.5], [1.0, 3.0], mode="alpha")
    full = alpha_weighted_increment(path, alpha)
    assert full[0, 0] == pytest.approx(1.0 * 0.5 + 3.0 * 0.5, abs=1e-14)
    part = alpha_weighted_increment(path, alpha, upto=0.25)
    assert part[0, 0] == pytest.approx(0.25, abs=1e-14)


# ---------------------------------------------------------------------------
# scalar reduction against the independent oracle
# ---------------------------------------------------------------------------


def test_scalar_reduction_all_functionals(rng):
    for _ in range(5):
        coeffs, h, xs, qs, model, scheme = scalar_instance(rng)
        vd = discrete_cs(model, scheme)
        assert vd == pytest.approx(oracles.discrete_cs(coeffs, h, xs, qs), abs=1e-9)
        x, path = sine_interpolate(scheme)
        t_hat = qs[-2] + 0.5 * (1.0 - qs[-2])
        vc = continuous_cs(model, x, path, t_hat=t_hat)
        oc = oracles.continuous_cs(coeffs, h, [0.0] + qs[:-1], xs, t_hat)
        assert vc == pytest.approx(oc, abs=1e-9)
        vr = continuous_cs_rewritten(model, x, path)
        assert vr == pytest.approx(oc, abs=1e-9)
        floor = sum(
            xs[k] * (oracles.xi(coeffs, qs[k], 1) - oracles.xi(coeffs, qs[k - 1] if k else 0.0, 1))
            for k in range(1, len(xs))
        )
        lam_val = floor + 1.3
        lam = np.array([[lam_val]])
        vp = discrete_parisi(model, lam, scheme)
        assert vp == pytest.approx(
            oracles.discrete_parisi(coeffs, h, xs, qs, lam_val), abs=1e-9
        )
        vcp = continuous_parisi(model, x, lam, path)
        assert vcp == pytest.approx(
            oracles.continuous_parisi(coeffs, h, [0.0] + qs[:-1], xs, lam_val), abs=1e-9
        )


def test_scalar_oracle_self_consistency(rng):
    # the oracle's own discrete closed forms agree with its quadrature forms
    for _ in range(3):
        coeffs, h, xs, qs, _, _ = scalar_instance(rng)
        t_hat = qs[-2] + 0.4 * (1.0 - qs[-2])
        assert oracles.discrete_cs(coeffs, h, xs, qs) == pytest.approx(
            oracles.continuous_cs(coeffs, h, [0.0] + qs[:-1], xs, t_hat), abs=1e-10
        )
        floor = sum(
            xs[k] * (oracles.xi(coeffs, qs[k], 1) - oracles.xi(coeffs, qs[k - 1] if k else 0.0, 1))
            for k in range(1, len(xs))
        )
        lam = floor + 0.9
        assert oracles.discrete_parisi(coeffs, h, xs, qs, lam) == pytest.approx(
            oracles.continuous_parisi(coeffs, h, [0.0] + qs[:-1], xs, lam), abs=1e-10
        )


def test_scalar_gse_oracle(rng):
    model = MixedModel(
        m=1, terms=((2, np.array([0.7])), (4, np.array([0.4]))), h=np.array([0.2])
    )
    coeffs = [(2, 0.7), (4, 0.4)]
    path = linear_path(np.array([[1.0]]))
    alpha = MeasureFn([0.0, 0.4], [0.3, 1.1], mode="alpha")
    l_val = 1.1 * 1.0 + 0.8
    triple = ZeroTempTriple(L=np.array([[l_val]]), alpha=alpha, path=path)
    mine = gse_functional(model, triple)
    ref = oracles.gse_value(coeffs, 0.2, l_val, [0.0, 0.4], [0.3, 1.1])
    assert mine == pytest.approx(ref, abs=1e-9)
