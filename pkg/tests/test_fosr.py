import dataclasses

import numpy as np
import pytest

from fcma.basis import BasisSystem, eval_basis
from fcma.dataset import StudyData
from fcma.fosr import draw_mediator, fit_fosr, fit_fosr_vectorized, predict_mean_curve
from fcma.simgen import gen_replication, make_scenario


def _study(Z, M, grid):
    n = Z.shape[0]
    return StudyData(
        subject_ids=tuple(f"s{i}" for i in range(n)),
        treatment=Z[:, 1].astype(int),
        covariates=Z[:, 2:],
        outcome=np.zeros(n, dtype=int),
        grid=grid,
        mediator=M,
        covariate_names=tuple(f"x{k}" for k in range(Z.shape[1] - 2)),
    )


def _design(rng, n, p):
    return np.column_stack([np.ones(n), rng.integers(0, 2, n), rng.normal(size=(n, p))])


def test_noiseless_recovery(rng):
    grid = np.linspace(0, 1, 40)
    basis = BasisSystem("bspline", 6)
    Phi = eval_basis(basis, grid)
    Z = _design(rng, 60, 2)
    B = rng.normal(size=(4, 6))
    fit = fit_fosr(_study(Z, Z @ B @ Phi.T, grid), basis)
    assert np.max(np.abs(fit.B_hat - B)) < 1e-8


def test_kronecker_identity(rng):
    grid = np.linspace(0, 1, 25)
    basis = BasisSystem("bspline", 5)
    Z = _design(rng, 40, 1)
    study = _study(Z, rng.normal(size=(40, 25)), grid)
    closed = fit_fosr(study, basis).B_hat
    stacked = fit_fosr_vectorized(study, basis)
    assert np.max(np.abs(closed - stacked)) < 1e-8


def test_residuals_orthogonal(simple_study):
    fit = fit_fosr(simple_study, BasisSystem("bspline", 5))
    Z = simple_study.design()
    E = simple_study.mediator - Z @ fit.B_hat @ fit.Phi.T
    assert np.max(np.abs(Z.T @ E @ fit.Phi)) < 1e-6 * np.linalg.norm(simple_study.mediator)


def test_covariance_structure(simple_study):
    fit = fit_fosr(simple_study, BasisSystem("bspline", 5))
    np.testing.assert_allclose(fit.Sigma_M, fit.Sigma_M.T, atol=1e-8)
    assert np.linalg.eigvalsh(fit.Sigma_M).min() > -1e-10
    w = np.linalg.eigvalsh(fit.Omega_hat)
    assert w.min() >= -1e-8 * w.max()
    Z = simple_study.design()
    H = np.linalg.solve(fit.Phi.T @ fit.Phi, fit.Phi.T)
    np.testing.assert_allclose(fit.Sigma_M, np.kron(np.linalg.inv(Z.T @ Z), H @ fit.Omega_hat @ H.T), atol=1e-14)


def test_white_noise_reduces_to_simple_formula(rng):
    grid = np.linspace(0, 1, 30)
    basis = BasisSystem("bspline", 5)
    Z = _design(rng, 4000, 1)
    sigma = 0.7
    M = rng.normal(scale=sigma, size=(4000, 30))
    fit = fit_fosr(_study(Z, M, grid), basis)
    simple = sigma**2 * np.kron(np.linalg.inv(Z.T @ Z), np.linalg.inv(fit.Phi.T @ fit.Phi))
    diag_ratio = np.diag(fit.Sigma_M) / np.diag(simple)
    assert np.all(np.abs(diag_ratio - 1) < 0.1)


def test_coefficient_covariance_matches_monte_carlo(rng):
    # repeated samples with fixed design and correlated error curves
    grid = np.linspace(0, 1, 15)
    basis = BasisSystem("bspline", 5)
    Z = _design(rng, 80, 1)
    L = np.linalg.cholesky(np.exp(-3 * np.abs(grid[:, None] - grid[None, :])))
    est, sig = [], None
    for _ in range(2000):
        M = rng.normal(size=(80, 15)) @ L.T
        fit = fit_fosr(_study(Z, M, grid), basis)
        est.append(fit.theta_M)
        sig = fit.Sigma_M if sig is None else sig + fit.Sigma_M
    emp = np.cov(np.array(est).T)
    avg = sig / 2000
    d_emp, d_avg = np.diag(emp), np.diag(avg)
    assert np.all(np.abs(d_emp / d_avg - 1) < 0.15)


def test_constant_treatment_is_rejected(simple_study):
    study = dataclasses.replace(simple_study, treatment=np.zeros(simple_study.n, dtype=int))
    with pytest.raises(np.linalg.LinAlgError, match="singular"):
        fit_fosr(study, BasisSystem("bspline", 5))


def test_simple_scenario_treatment_function():
    truth = None
    for seed in range(3):
        study = gen_replication(make_scenario("simple", n=1000, T=100), seed=100 + seed)
        fit = fit_fosr(study, BasisSystem("bspline", 5))
        K = fit.Phi.shape[1]
        cov1 = fit.Sigma_M[K : 2 * K, K : 2 * K]
        se = np.sqrt(np.einsum("tk,kl,tl->t", fit.Phi, cov1, fit.Phi))
        truth = 1.5 * np.sin(0.5 * np.pi * study.grid)
        inside = np.abs(fit.coef_functions()[1] - truth) <= 3 * se
        assert inside.mean() >= 0.95


def test_predict_mean_curve(simple_study):
    fit = fit_fosr(simple_study, BasisSystem("bspline", 5))
    coefs = fit.coef_functions()
    np.testing.assert_allclose(predict_mean_curve(fit, [1, 0, 0]), coefs[0], atol=1e-12)
    diff = predict_mean_curve(fit, [1, 1, 0.3]) - predict_mean_curve(fit, [1, 0, 0.3])
    np.testing.assert_allclose(diff, coefs[1], atol=1e-12)
    with pytest.raises(ValueError):
        predict_mean_curve(fit, [1, 0])


def test_draw_without_noise_is_mean(simple_study, rng):
    fit = fit_fosr(simple_study, BasisSystem("bspline", 5))
    zero = dataclasses.replace(fit, Omega_hat=np.zeros_like(fit.Omega_hat))
    z = [1, 1, 0.5]
    np.testing.assert_array_equal(draw_mediator(fit.theta_M, zero, z, rng), predict_mean_curve(fit, z))


def test_draw_covariance_converges(rng):
    grid = np.linspace(0, 1, 8)
    Z = _design(rng, 300, 1)
    L = np.linalg.cholesky(np.exp(-3 * np.abs(grid[:, None] - grid[None, :])))
    fit = fit_fosr(_study(Z, rng.normal(size=(300, 8)) @ L.T, grid), BasisSystem("bspline", 4))
    N = 10_000
    z = np.tile([1, 0, 0.2], (N, 1))
    dev = draw_mediator(fit.theta_M, fit, z, rng) - predict_mean_curve(fit, z)
    emp = dev.T @ dev / N
    Om = fit.Omega_hat
    mc_se = np.sqrt((np.outer(np.diag(Om), np.diag(Om)) + Om**2) / N)
    assert np.all(np.abs(emp - Om) <= 5 * mc_se)


def test_draw_is_deterministic(simple_study):
    fit = fit_fosr(simple_study, BasisSystem("bspline", 5))
    a = draw_mediator(fit.theta_M, fit, [1, 1, 0], np.random.default_rng(5))
    b = draw_mediator(fit.theta_M, fit, [1, 1, 0], np.random.default_rng(5))
    np.testing.assert_array_equal(a, b)
