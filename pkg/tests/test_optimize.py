import math

import numpy as np
import pytest

import oracles
from conftest import random_corr, random_even_model
from vecspin.errors import NotPositiveDefinite
from vecspin.functionals import (
    DiscreteOrderParam,
    cs_increment_sums,
    discrete_cs,
    parisi_ladder,
    sine_interpolate,
)
from vecspin.linalg import frob_ip, fro_norm, min_eig, sym_inv
from vecspin.model import MixedModel
from vecspin.optimize import (
    OptimizerConfig,
    SchemeParametrization,
    central_diff_grad,
    embed_scheme,
    minimize_discrete_cs,
    minimize_discrete_parisi,
    minimize_gse,
    rs_gse_closed_form,
    rs_gse_variants,
    sup_over_Q,
)


def pure2_scalar(beta=1.0):
    return MixedModel(m=1, terms=((2, np.array([beta])),), h=np.zeros(1))


QUICK = OptimizerConfig(restarts=2, max_iters=400, grad_tol=1e-7, seed=3, r_schedule=(2,))


def test_scalar_pure2_reaches_rs_optimum():
    model = pure2_scalar()
    rep = minimize_discrete_cs(model, np.array([[1.0]]), QUICK)
    q_star = 1.0 - 1.0 / math.sqrt(2.0)
    expect = oracles.rs_cs_value([(2, 1.0)], 0.0, q_star)
    assert rep.best_value == pytest.approx(expect, abs=1e-9)
    assert rep.converged and rep.kkt_residual <= QUICK.grad_tol
    # a finer level schedule does not move the value (the model stays RS)
    cfg8 = OptimizerConfig(restarts=2, max_iters=500, grad_tol=1e-7, seed=3, r_schedule=(2, 8))
    rep8 = minimize_discrete_cs(model, np.array([[1.0]]), cfg8)
    assert abs(rep8.best_value - rep.best_value) < 1e-6


def test_identity_constraint_decouples():
    model = MixedModel(
        m=2, terms=((2, np.array([1.0, 0.6])), (4, np.array([0.0, 0.4]))), h=np.zeros(2)
    )
    cfg = OptimizerConfig(restarts=2, max_iters=400, grad_tol=1e-8, seed=5, r_schedule=(2,))
    rep = minimize_discrete_cs(model, np.eye(2), cfg)
    total = 0.0
    for j, coeffs in enumerate([[(2, 1.0)], [(2, 0.6), (4, 0.4)]]):
        scalar_model = MixedModel(
            m=1, terms=tuple((p, np.array([b])) for p, b in coeffs), h=np.zeros(1)
        )
        srep = minimize_discrete_cs(scalar_model, np.array([[1.0]]), cfg)
        total += srep.best_value
    assert rep.best_value == pytest.approx(total, abs=1e-6)


def test_level_monotonicity(rng):
    model = random_even_model(rng, 2)
    q = random_corr(rng, 2)
    cfg = OptimizerConfig(restarts=1, max_iters=300, grad_tol=1e-6, seed=9, r_schedule=(2, 4, 8))
    rep = minimize_discrete_cs(model, q, cfg)
    per_r = rep.extras["per_r_values"]
    assert per_r[4] <= per_r[2] + 1e-9
    assert per_r[8] <= per_r[4] + 1e-9


def test_embedding_preserves_value(rng):
    from conftest import random_scheme

    model = random_even_model(rng, 2)
    p = random_scheme(rng, 2, 2)
    fine = embed_scheme(p, 5)
    assert fine.r == 5
    assert discrete_cs(model, fine) == pytest.approx(discrete_cs(model, p), abs=1e-10)


def test_gradient_matches_central_differences(rng):
    model = random_even_model(rng, 2)
    q = random_corr(rng, 2)
    prob = SchemeParametrization(model, q, 3)
    for _ in range(5):
        theta = prob.init_random(rng)
        g_int = prob.gradient(theta)
        g_chk = central_diff_grad(prob.value, theta, rel_step=1e-5)
        rel = np.linalg.norm(g_int - g_chk) / np.linalg.norm(g_chk)
        assert rel < 1e-5


def test_duality_and_multiplier_ladder():
    rng = np.random.default_rng(77)
    model = random_even_model(rng, 2)
    q = random_corr(rng, 2)
    cfg = OptimizerConfig(restarts=2, max_iters=500, grad_tol=1e-7, seed=13, r_schedule=(2,))
    rc = minimize_discrete_cs(model, q, cfg)
    rp = minimize_discrete_parisi(model, q, cfg)
    gap = abs(rc.best_value - rp.best_value)
    assert gap <= 1e-3 * (1.0 + abs(rc.best_value))
    p_cs = DiscreteOrderParam.from_dict(rc.argmin)
    p_pp = DiscreteOrderParam.from_dict(rp.argmin)
    lam = np.asarray(rp.argmin["lambda"])
    for d_mat, lam_mat in zip(cs_increment_sums(p_cs), parisi_ladder(model, lam, p_pp)):
        assert fro_norm(lam_mat - sym_inv(d_mat)) < 1e-3


def test_rs_gse_closed_form_scalar_and_identity(rng):
    model = pure2_scalar()
    l0, value = rs_gse_closed_form(model, np.array([[1.0]]))
    assert value == pytest.approx(math.sqrt(2.0), abs=1e-12)
    assert l0[0, 0] == pytest.approx(1.0 / math.sqrt(2.0), abs=1e-12)
    # decoupled copies: the value is the sum of the per-copy square roots
    model2 = MixedModel(
        m=2, terms=((2, np.array([1.0, 0.5])), (4, np.array([0.3, 0.7]))), h=np.zeros(2)
    )
    _, value2 = rs_gse_closed_form(model2, np.eye(2))
    expect = sum(
        math.sqrt(model2.xi(np.eye(2), 1)[j, j]) for j in range(2)
    )
    assert value2 == pytest.approx(expect, abs=1e-12)


def test_rs_gse_stationarity_identity(rng):
    for k in range(20):
        m = int(rng.integers(1, 4))
        model = random_even_model(rng, m)
        q = random_corr(rng, m)
        l0, _ = rs_gse_closed_form(model, q)
        target = model.xi(q, 1) + model.field_outer()
        resid = fro_norm(target - sym_inv(l0) @ q @ sym_inv(l0))
        assert resid < 1e-10


def test_rs_gse_variants_report(rng):
    model = random_even_model(rng, 2)
    q = random_corr(rng, 2)
    out = rs_gse_variants(model, q)
    assert out["value"] == out["trace_value"]
    assert isinstance(out["variants_agree"], bool)
    with pytest.raises(NotPositiveDefinite):
        rs_gse_closed_form(model, np.array([[1.0, 1.0], [1.0, 1.0]]))


def test_minimize_gse_scalar_pure2():
    model = pure2_scalar()
    cfg = OptimizerConfig(restarts=2, max_iters=200, grad_tol=1e-6, seed=4, r_schedule=(2,))
    rep = minimize_gse(model, np.array([[1.0]]), cfg)
    assert rep.best_value == pytest.approx(math.sqrt(2.0), abs=1e-4)
    # feasibility of the returned triple is validated on reconstruction
    from vecspin.functionals import ZeroTempTriple, alpha_weighted_increment

    triple = ZeroTempTriple.from_dict(rep.argmin)
    slack = min_eig(triple.L - alpha_weighted_increment(triple.path, triple.alpha))
    assert slack > 0


def test_minimize_gse_strict_rs_margin_kills_alpha():
    # a field pushes the model strictly inside the replica-symmetric region,
    # where the minimizing density is uniquely zero
    model = MixedModel(m=1, terms=((2, np.array([1.0])),), h=np.array([0.5]))
    cfg = OptimizerConfig(restarts=2, max_iters=300, grad_tol=1e-7, seed=4, r_schedule=(2,))
    rep = minimize_gse(model, np.array([[1.0]]), cfg)
    _, rs_value = rs_gse_closed_form(model, np.array([[1.0]]))
    assert rs_value == pytest.approx(math.sqrt(2.25), abs=1e-12)
    assert rep.best_value == pytest.approx(rs_value, abs=1e-4)
    assert rep.extras["alpha_sup"] < 1e-4


def test_sup_over_q_scalar_and_bounds():
    model = pure2_scalar(0.8)
    cfg = OptimizerConfig(restarts=1, max_iters=300, grad_tol=1e-6, seed=2, r_schedule=(2,))
    q, value = sup_over_Q(model, cfg)
    assert q.shape == (1, 1) and q[0, 0] == pytest.approx(1.0)
    inner = minimize_discrete_cs(model, np.array([[1.0]]), cfg).best_value
    assert value == pytest.approx(inner, abs=1e-12)


def test_sup_over_q_dominates_identity():
    model = MixedModel(m=2, terms=((2, np.array([0.9, 0.9])),), h=np.zeros(2))
    cfg = OptimizerConfig(restarts=2, max_iters=40, grad_tol=1e-6, seed=6, r_schedule=(2,))
    q, value = sup_over_Q(model, cfg)
    at_identity = minimize_discrete_cs(model, np.eye(2), cfg).best_value
    assert value >= at_identity - 1e-6
    assert np.allclose(np.diag(q), 1.0, atol=1e-12)
    assert min_eig(q) > 0


def test_sign_flip_gauge_invariance():
    # even models with no field: the functional is invariant under Q -> SQS
    model = MixedModel(
        m=2, terms=((2, np.array([0.8, 0.8])), (4, np.array([0.4, 0.4]))), h=np.zeros(2)
    )
    rng = np.random.default_rng(11)
    q = random_corr(rng, 2)
    s = np.diag([1.0, -1.0])
    cfg = OptimizerConfig(restarts=1, max_iters=300, grad_tol=1e-7, seed=8, r_schedule=(2,))
    v1 = minimize_discrete_cs(model, q, cfg).best_value
    v2 = minimize_discrete_cs(model, s @ q @ s, cfg).best_value
    assert v1 == pytest.approx(v2, abs=1e-6)
