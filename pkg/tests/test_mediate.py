import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fcma.basis import BasisSystem, eval_basis, smooth_curve
from fcma.fosr import FosrFit, fit_fosr
from fcma.fpca import fit_fpca
from fcma.mediate import (
    ESTIMANDS,
    draw_model_params,
    effects_from_means,
    impute_draw_effects,
    run_mediation,
)
from fcma.simgen import REFERENCE_TRUTH, gen_replication, make_scenario
from fcma.zipmodel import ZipFit, build_fpcr_design, fit_zip


@pytest.fixture(scope="module")
def fitted():
    study = gen_replication(make_scenario("simple", n=300, T=40), seed=7)
    fit_m = fit_fosr(study, BasisSystem("bspline", 5))
    fb = fit_fpca(study.mediator, study.grid)
    fit_y = fit_zip(build_fpcr_design(fb, study, 2), study.outcome)
    return study, fit_m, fb, fit_y


def _zipfit(alpha, gamma):
    k = len(alpha)
    return ZipFit(np.asarray(alpha, float), np.asarray(gamma, float), np.zeros((2 * k, 2 * k)), 0.0, True, 0, 0.0)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=True), min_size=4, max_size=4),
    st.integers(-1000, 900),
)
def test_decomposition_exact(vals, scale):
    # also exercises subnormal and mixed-magnitude inputs
    means = np.array(vals).reshape(2, 2) * 2.0**scale
    te, nie1, nde0, nie0, nde1 = effects_from_means(means)
    assert te == nie1 + nde0
    assert te == nie0 + nde1


def test_draw_params_zero_covariance(fitted, rng):
    study, fit_m, fb, fit_y = fitted
    fm0 = dataclasses.replace(fit_m, Sigma_M=np.zeros_like(fit_m.Sigma_M))
    fy0 = dataclasses.replace(fit_y, Sigma_Y=np.zeros_like(fit_y.Sigma_Y))
    tm, ty = draw_model_params(fm0, fy0, rng)
    np.testing.assert_array_equal(tm, fit_m.theta_M)
    np.testing.assert_array_equal(ty, fit_y.theta_Y)


def test_draw_params_center(fitted, rng):
    study, fit_m, fb, fit_y = fitted
    draws = [draw_model_params(fit_m, fit_y, rng) for _ in range(10_000)]
    tm = np.array([d[0] for d in draws])
    ty = np.array([d[1] for d in draws])
    se_m = np.sqrt(np.diag(fit_m.Sigma_M) / 10_000)
    se_y = np.sqrt(np.diag(fit_y.Sigma_Y) / 10_000)
    assert np.all(np.abs(tm.mean(axis=0) - fit_m.theta_M) <= 4 * se_m)
    assert np.all(np.abs(ty.mean(axis=0) - fit_y.theta_Y) <= 4 * se_y)


def test_draw_params_deterministic(fitted):
    study, fit_m, fb, fit_y = fitted
    a = draw_model_params(fit_m, fit_y, np.random.default_rng(3))
    b = draw_model_params(fit_m, fit_y, np.random.default_rng(3))
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def _null_thetas(fit_m, fit_y, q):
    B = fit_m.B_hat.copy()
    B[1] = 0.0
    alpha, gamma = fit_y.alpha.copy(), fit_y.gamma.copy()
    return B, alpha, gamma


def test_null_model_gives_zero_effects(fitted, rng):
    study, fit_m, fb, fit_y = fitted
    B, alpha, gamma = _null_thetas(fit_m, fit_y, 2)
    alpha[1:4] = 0.0  # score terms and treatment
    gamma[1:4] = 0.0
    eff = impute_draw_effects(B.ravel(), np.concatenate([alpha, gamma]), study, fit_m, fit_y, fb, rng)
    np.testing.assert_array_equal(eff, np.zeros(5))


def test_blocked_path_gives_zero_indirect(fitted):
    study, fit_m, fb, fit_y = fitted
    B, alpha, gamma = _null_thetas(fit_m, fit_y, 2)
    theta_Y = np.concatenate([alpha, gamma])
    quiet = impute_draw_effects(B.ravel(), theta_Y, study, fit_m, fit_y, fb, np.random.default_rng(0), mediator_noise=False)
    assert quiet[1] == 0.0 and quiet[3] == 0.0
    runs = np.array(
        [impute_draw_effects(B.ravel(), theta_Y, study, fit_m, fit_y, fb, np.random.default_rng(s))[[1, 3]] for s in range(40)]
    )
    se = runs.std(axis=0, ddof=1)
    assert np.all(np.abs(runs) <= 4 * se)
    assert np.all(np.abs(runs.mean(axis=0)) <= 3 * se / np.sqrt(40))


def test_truth_plugged_in_reproduces_reference_effects():
    sc = make_scenario("simple", n=100_000, T=100)
    study = gen_replication(sc, seed=2024)
    t = study.grid
    basis = BasisSystem("bspline", 5)
    Phi = eval_basis(basis, t)
    B = np.vstack([smooth_curve(f(t), Phi) for f in (sc.beta0, sc.beta1, sc.beta2)])
    Omega = sc.kernel_scale * np.exp(-sc.kernel_rate * np.abs(t[:, None] - t[None, :]))
    fit_m = FosrFit(basis, B, np.zeros((15, 15)), Omega, t, ("intercept", "treatment", "x"), Phi)
    fb = fit_fpca(study.mediator[:5000], t)
    q = fb.q_max
    w = fb.quad_weights
    a_star = fb.eigenfunctions @ (w * sc.alpha1(t))
    g_star = fb.eigenfunctions @ (w * sc.gamma1(t))
    alpha = np.concatenate([[sc.alpha0 + fb.mu_hat @ (w * sc.alpha1(t))], a_star, [sc.alpha2, sc.alpha3]])
    gamma = np.concatenate([[sc.gamma0 + fb.mu_hat @ (w * sc.gamma1(t))], g_star, [sc.gamma2, sc.gamma3]])
    fit_y = _zipfit(alpha, gamma)
    eff = impute_draw_effects(B.ravel(), fit_y.theta_Y, study, fit_m, fit_y, fb, np.random.default_rng(1), n_inner=1)
    assert abs(eff[0] - 5.28) <= 0.15
    assert np.all(np.abs(eff - np.array(REFERENCE_TRUTH["simple"])) <= 0.15)


def test_identical_streams_collapse(fitted):
    study, fit_m, fb, fit_y = fitted
    draws, est = run_mediation(study, fit_m, fit_y, fb, J=2, draw_seeds=[5, 5])
    np.testing.assert_array_equal(draws[0], draws[1])
    np.testing.assert_array_equal(est.se, 0.0)
    np.testing.assert_array_equal(est.ci_low, est.point)
    np.testing.assert_array_equal(est.ci_high, est.point)


def test_per_draw_identity_and_determinism(fitted):
    study, fit_m, fb, fit_y = fitted
    draws, est = run_mediation(study, fit_m, fit_y, fb, J=60, seed=99, n_inner=2)
    te, nie1, nde0, nie0, nde1 = draws.T
    assert np.max(np.abs(te - nie1 - nde0)) == 0.0
    assert np.max(np.abs(te - nie0 - nde1)) == 0.0
    again, _ = run_mediation(study, fit_m, fit_y, fb, J=60, seed=99, n_inner=2)
    assert draws.tobytes() == again.tobytes()
    assert np.all(est.ci_low <= est.point) and np.all(est.point <= est.ci_high)
    assert est.meta["J"] == 60 and est.meta["n_inner"] == 2


def test_draws_independent_of_schedule(fitted):
    study, fit_m, fb, fit_y = fitted
    full, _ = run_mediation(study, fit_m, fit_y, fb, J=10, seed=4)
    from fcma.mediate import child_seed

    part, _ = run_mediation(study, fit_m, fit_y, fb, J=3, draw_seeds=[child_seed(4, j) for j in (7, 8, 9)])
    np.testing.assert_array_equal(full[7:], part)


def test_summary_conventions(fitted):
    study, fit_m, fb, fit_y = fitted
    draws, est = run_mediation(study, fit_m, fit_y, fb, J=41, seed=2)
    np.testing.assert_array_equal(est.point, np.median(draws, axis=0))
    np.testing.assert_allclose(est.se, np.std(draws, axis=0, ddof=1))
    sorted_te = np.sort(draws[:, 0])
    # linear interpolation: position 0.025 * 40 = 1.0 -> second order statistic
    assert est.ci_low[0] == sorted_te[1]


def test_argument_errors(fitted):
    study, fit_m, fb, fit_y = fitted
    with pytest.raises(ValueError):
        run_mediation(study, fit_m, fit_y, fb, J=1)
    with pytest.raises(ValueError):
        run_mediation(study, fit_m, fit_y, fb, J=3, n_inner=0)
    with pytest.raises(ValueError):
        run_mediation(study, fit_m, fit_y, fb, J=3, draw_seeds=[1, 2])


def test_treatment_relabeling_negates_total_effect(fitted):
    study, fit_m, fb, fit_y = fitted
    J = 400
    _, est = run_mediation(study, fit_m, fit_y, fb, J=J, seed=1)
    flipped = dataclasses.replace(study, treatment=1 - study.treatment)
    fm2 = fit_fosr(flipped, BasisSystem("bspline", 5))
    fy2 = fit_zip(build_fpcr_design(fb, flipped, 2), flipped.outcome)
    _, est2 = run_mediation(flipped, fm2, fy2, fb, J=J, seed=2)
    mc = 1.2533 * np.hypot(est.se[0], est2.se[0]) / np.sqrt(J)
    assert abs(est.point[0] + est2.point[0]) <= 4 * mc
    # relabeling swaps the roles: NIE(1) <-> -NIE(0), NDE(0) <-> -NDE(1)
    assert abs(est.point[1] + est2.point[3]) <= 4 * 1.2533 * np.hypot(est.se[1], est2.se[3]) / np.sqrt(J)


@pytest.mark.slow
def test_monte_carlo_error_shrinks_with_J():
    study = gen_replication(make_scenario("simple", n=150, T=30), seed=3)
    fit_m = fit_fosr(study, BasisSystem("bspline", 5))
    fb = fit_fpca(study.mediator, study.grid)
    fit_y = fit_zip(build_fpcr_design(fb, study, 2), study.outcome)
    spread = {}
    for J in (250, 1000, 4000):
        pts = np.array([run_mediation(study, fit_m, fit_y, fb, J=J, seed=1000 * J + s)[1].point for s in range(40)])
        # pooled over estimands to tame the sampling noise of the spread itself
        spread[J] = np.sqrt(np.sum(pts.var(axis=0, ddof=1)))
    for small, big in ((250, 1000), (1000, 4000)):
        ratio = spread[small] / spread[big]
        assert 2 / 1.5 <= ratio <= 2 * 1.5, (small, big, ratio)
