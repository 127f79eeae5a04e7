"""Functional zero-inflated Poisson outcome model.

The functional mediator enters both links through its leading FPCA scores
(functional principal components regression), so the outcome model becomes
an ordinary ZIP regression on the design ``[1, xi_1..xi_q, A, X]``:

    logit(p_i)    = row_i . alpha
    log(lambda_i) = row_i . gamma

The packed parameter vector is ``theta = (alpha, gamma)``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy import optimize, special

from fcma.dataset import StudyData
from fcma.fpca import FpcaBasis

log = logging.getLogger(__name__)

ETA_CLAMP = 30.0
GTOL = 1e-6
MAX_ITER = 500
FD_STEP = 1e-5


@dataclass(frozen=True)
class ZipDesign:
    rows: np.ndarray
    q: int
    labels: Tuple[str, ...]

    @property
    def n_coef(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class ZipFit:
    alpha: np.ndarray
    gamma: np.ndarray
    Sigma_Y: np.ndarray
    loglik: float
    converged: bool
    iterations: int
    gradient_norm: float
    labels: Tuple[str, ...] = ()
    clamp_count: int = 0
    psd_projected: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def theta_Y(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.gamma])

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.Sigma_Y), 0.0, None))


def build_fpcr_design(fb: FpcaBasis, study: StudyData, q: int) -> ZipDesign:
    """Design rows ``[1, xi_1..xi_q, A, X]`` with scores projected on the FPCA basis."""
    if q > fb.q_max:
        raise ValueError(f"q = {q} exceeds the {fb.q_max} available components")
    if study.mediator.shape[1] != len(fb.mu_hat):
        raise ValueError("study grid does not match the FPCA grid")
    xi = fb.scores(study.mediator, q)
    rows = np.column_stack([np.ones(study.n), xi, study.treatment, study.covariates])
    labels = ("intercept", *(f"xi{j + 1}" for j in range(q)), "treatment", *study.covariate_names)
    return ZipDesign(rows=rows, q=q, labels=labels)


def assemble_rows(scores, treatment, covariates) -> np.ndarray:
    scores = np.atleast_2d(scores)
    n = scores.shape[0]
    return np.column_stack([np.ones(n), scores, np.broadcast_to(treatment, (n,)), covariates])


def _split(theta, k: int):
    theta = np.asarray(theta, dtype=float)
    if theta.size != 2 * k:
        raise ValueError(f"theta has {theta.size} entries, expected {2 * k}")
    return theta[:k], theta[k:]


def zip_loglik(theta, design, y, return_clamped: bool = False):
    """Log-likelihood of the ZIP regression and its analytic gradient.

    Parameters
    ----------
    theta : (2k,) array
        ``(alpha, gamma)``.
    design : ZipDesign or (n, k) array
    y : (n,) nonnegative integer array

    Returns
    -------
    value : float
    grad : (2k,) array
    """
    X = design.rows if isinstance(design, ZipDesign) else np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    alpha, gamma = _split(theta, X.shape[1])
    eta_a = X @ alpha
    eta_g_raw = X @ gamma
    eta_g = np.clip(eta_g_raw, -ETA_CLAMP, ETA_CLAMP)
    clamped = eta_g != eta_g_raw
    lam = np.exp(eta_g)

    log_p = -np.logaddexp(0.0, -eta_a)
    log_1mp = -np.logaddexp(0.0, eta_a)
    p = np.exp(log_p)
    zero = y == 0

    ll0 = np.logaddexp(log_p[zero], log_1mp[zero] - lam[zero])
    yp = y[~zero]
    ll_pos = log_1mp[~zero] - lam[~zero] + yp * eta_g[~zero] - special.gammaln(yp + 1.0)
    value = float(ll0.sum() + ll_pos.sum())

    # r = posterior probability that an observed zero is structural
    r = np.exp(log_p[zero] - ll0)
    d_eta_a = np.empty_like(y)
    d_eta_g = np.empty_like(y)
    d_eta_a[zero] = r - p[zero]
    d_eta_g[zero] = -(1.0 - r) * lam[zero]
    d_eta_a[~zero] = -p[~zero]
    d_eta_g[~zero] = yp - lam[~zero]
    d_eta_g[clamped] = 0.0
    grad = np.concatenate([X.T @ d_eta_a, X.T @ d_eta_g])
    if return_clamped:
        return value, grad, int(clamped.sum())
    return value, grad


def fd_hessian(grad_fn, theta, step: float = FD_STEP) -> np.ndarray:
    """Symmetrised central-difference Jacobian of ``grad_fn``."""
    theta = np.asarray(theta, dtype=float)
    k = theta.size
    H = np.empty((k, k))
    for j in range(k):
        e = np.zeros(k)
        e[j] = step
        H[:, j] = (grad_fn(theta + e) - grad_fn(theta - e)) / (2 * step)
    return 0.5 * (H + H.T)


def poisson_newton(X, y, n_steps: int = 25) -> np.ndarray:
    """Poisson log-linear regression by damped Newton steps from ``log(mean y)``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    beta = np.zeros(X.shape[1])
    beta[0] = np.log(max(y.mean(), 1e-8))

    def ll(b):
        eta = np.clip(X @ b, -ETA_CLAMP, ETA_CLAMP)
        return float(np.sum(y * eta - np.exp(eta)))

    cur = ll(beta)
    for _ in range(n_steps):
        mu = np.exp(np.clip(X @ beta, -ETA_CLAMP, ETA_CLAMP))
        g = X.T @ (y - mu)
        H = (X * mu[:, None]).T @ X
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        t = 1.0
        while t > 1e-6:
            cand = beta + t * step
            new = ll(cand)
            if new >= cur:
                beta, cur = cand, new
                break
            t /= 2
        else:
            break
    return beta


def default_init(design, y) -> np.ndarray:
    """Warm start: Poisson fit on positive counts for gamma, zero-share gap for the alpha intercept."""
    X = design.rows if isinstance(design, ZipDesign) else np.asarray(design, dtype=float)
    y = np.asarray(y)
    k = X.shape[1]
    pos = y > 0
    gamma = np.zeros(k)
    if pos.sum() > k:
        gamma = poisson_newton(X[pos], y[pos])
    elif pos.any():
        gamma[0] = np.log(y[pos].mean())
    lam = np.exp(np.clip(X @ gamma, -ETA_CLAMP, ETA_CLAMP))
    excess = np.mean(y == 0) - np.mean(np.exp(-lam))
    p0 = min(max(0.05, excess), 0.95)
    alpha = np.zeros(k)
    alpha[0] = np.log(p0 / (1 - p0))
    return np.concatenate([alpha, gamma])


def _covariance(H: np.ndarray) -> Tuple[np.ndarray, bool]:
    info = -H
    w, V = np.linalg.eigh(info)
    if w.min() > 1e-10 * max(w.max(), 1.0):
        cov = np.linalg.inv(info)
        return 0.5 * (cov + cov.T), False
    warnings.warn("observed information is not positive definite; projecting the covariance to PSD")
    floor = 1e-10 * max(w.max(), 1.0)
    inv_w = np.where(w > floor, 1.0 / np.maximum(w, floor), 0.0)
    return (V * inv_w) @ V.T, True


def fit_zip(design, y, init=None, gtol: float = GTOL, maxiter: int = MAX_ITER) -> ZipFit:
    """Maximum-likelihood fit of the ZIP regression.

    BFGS on the negative log-likelihood, followed by Newton polishing steps on
    the finite-difference Hessian until the gradient sup-norm drops below
    ``gtol``. The covariance is the inverse observed information.
    """
    labels = design.labels if isinstance(design, ZipDesign) else ()
    X = design.rows if isinstance(design, ZipDesign) else np.asarray(design, dtype=float)
    y = np.asarray(y)
    theta0 = default_init(X, y) if init is None else np.asarray(init, dtype=float)

    def negll(th):
        v, g = zip_loglik(th, X, y)
        return -v, -g

    def grad(th):
        return zip_loglik(th, X, y)[1]

    ll_init = zip_loglik(theta0, X, y)[0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = optimize.minimize(
            negll, theta0, jac=True, method="BFGS", options={"gtol": gtol, "maxiter": maxiter, "norm": np.inf}
        )
    theta = res.x
    iterations = int(res.nit)
    value, g = zip_loglik(theta, X, y)
    if not np.isfinite(value) or value < ll_init:
        theta, value, g = theta0, ll_init, grad(theta0)

    H = fd_hessian(grad, theta)
    for _ in range(20):
        if np.max(np.abs(g)) < gtol:
            break
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        improved = False
        while t > 1e-8:
            cand = theta + t * step
            cv, cg = zip_loglik(cand, X, y)
            if np.isfinite(cv) and cv >= value - 1e-12 * abs(value):
                theta, value, g = cand, cv, cg
                improved = True
                break
            t /= 2
        iterations += 1
        if not improved:
            break
        H = fd_hessian(grad, theta)

    gnorm = float(np.max(np.abs(g)))
    converged = gnorm < gtol
    if not converged:
        log.warning("ZIP fit did not converge: gradient sup-norm %.3g after %d iterations", gnorm, iterations)
    Sigma, projected = _covariance(H)
    _, _, n_clamped = zip_loglik(theta, X, y, return_clamped=True)
    k = X.shape[1]
    return ZipFit(
        alpha=theta[:k].copy(),
        gamma=theta[k:].copy(),
        Sigma_Y=Sigma,
        loglik=float(value),
        converged=converged,
        iterations=iterations,
        gradient_norm=gnorm,
        labels=tuple(labels),
        clamp_count=n_clamped,
        psd_projected=projected,
        meta={"optimizer": "BFGS + Newton polish", "gtol": gtol, "maxiter": maxiter, "fd_step": FD_STEP},
    )


def zip_mean(fit_or_theta, rows):
    """Structural-zero probability, Poisson rate and conditional mean ``(1 - p) lambda``.

    ``rows`` may be one design row or an ``n x k`` matrix.
    """
    rows = np.asarray(rows, dtype=float)
    if isinstance(fit_or_theta, ZipFit):
        alpha, gamma = fit_or_theta.alpha, fit_or_theta.gamma
    else:
        alpha, gamma = _split(fit_or_theta, rows.shape[-1])
    eta_a = rows @ alpha
    p = special.expit(eta_a)
    lam = np.exp(np.clip(rows @ gamma, -ETA_CLAMP, ETA_CLAMP))
    # (1 - p) = expit(-eta_a) keeps precision when p is close to 1
    return p, lam, special.expit(-eta_a) * lam


def zip_pmf(p, lam, y):
    """ZIP probability mass: ``p + (1-p)e^{-lam}`` at zero, ``(1-p) Pois(y; lam)`` above."""
    p = np.asarray(p, dtype=float)
    lam = np.asarray(lam, dtype=float)
    y = np.asarray(y)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p must lie in [0, 1]")
    if np.any(lam <= 0):
        raise ValueError("lambda must be positive")
    if np.any(y < 0) or np.any(y != np.floor(y)):
        raise ValueError("y must be a nonnegative integer")
    pois = np.exp(-lam + y * np.log(lam) - special.gammaln(y + 1.0))
    out = np.where(y == 0, p + (1 - p) * np.exp(-lam), (1 - p) * pois)
    return out if out.ndim else float(out)


def outcome_coef_functions(fit: ZipFit, fb: FpcaBasis, q: int) -> Tuple[np.ndarray, np.ndarray]:
    """Implied ``alpha_1(t) = sum_j alpha*_j v_j(t)`` and ``gamma_1(t)`` on the FPCA grid."""
    V = fb.eigenfunctions[:q]
    return fit.alpha[1 : q + 1] @ V, fit.gamma[1 : q + 1] @ V
