"""Function-on-scalar regression for the mediator curves.

The model ``M = Z B Phi^T + E`` is fitted by ordinary least squares on the
vectorised form ``vec(M^T) = (Z kron Phi) vec(B^T)``, which separates into
``B = (Z^T Z)^{-1} Z^T M Phi (Phi^T Phi)^{-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from fcma.basis import BasisSystem, eval_basis, projection
from fcma.dataset import StudyData


@dataclass(frozen=True)
class FosrFit:
    basis: BasisSystem
    B_hat: np.ndarray  # (p+2, K), rows ordered [intercept, treatment, covariates...]
    Sigma_M: np.ndarray  # covariance of vec(B_hat^T) == B_hat.ravel()
    Omega_hat: np.ndarray  # (T, T) residual covariance on the grid
    grid: np.ndarray
    design_labels: Tuple[str, ...]
    Phi: np.ndarray

    @property
    def theta_M(self) -> np.ndarray:
        return self.B_hat.ravel()

    def coef_functions(self) -> np.ndarray:
        """Coefficient functions on the grid, one row per design column."""
        return self.B_hat @ self.Phi.T


def psd_factor(cov: np.ndarray, rel_jitter: float = 1e-8) -> np.ndarray:
    """Lower factor ``L`` with ``L L^T ~= cov + jitter I``; zero matrix gives a zero factor.

    jitter = rel_jitter * trace(cov) / dim. Falls back to a clipped
    eigendecomposition when Cholesky fails.
    """
    cov = 0.5 * (np.asarray(cov, dtype=float) + np.asarray(cov, dtype=float).T)
    d = cov.shape[0]
    tr = np.trace(cov)
    if tr == 0.0 and not np.any(cov):
        return np.zeros_like(cov)
    jittered = cov + rel_jitter * abs(tr) / d * np.eye(d)
    try:
        return np.linalg.cholesky(jittered)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(jittered)
        if w.max() <= 0 or w.min() < -1e-6 * w.max():
            raise np.linalg.LinAlgError("covariance matrix is not positive semidefinite") from None
        return V * np.sqrt(np.clip(w, 0.0, None))


def fit_fosr(study: StudyData, basis: BasisSystem) -> FosrFit:
    """Least-squares fit of the mediator model with one basis for all coefficient functions.

    Raises
    ------
    numpy.linalg.LinAlgError
        If the scalar design ``Z = [1, A, X]`` or the basis matrix is singular.
    """
    Z = study.design()
    M = np.asarray(study.mediator, dtype=float)
    n, ncol = Z.shape
    if n <= ncol:
        raise ValueError(f"need more subjects ({n}) than design columns ({ncol})")
    if np.linalg.matrix_rank(Z) < ncol:
        raise np.linalg.LinAlgError("design matrix [1, A, X] is singular (collinear or constant columns)")
    Phi = eval_basis(basis, study.grid)
    H = projection(Phi)  # (K, T)
    ZtZ_inv = np.linalg.inv(Z.T @ Z)

    B_hat = ZtZ_inv @ Z.T @ M @ H.T
    E = M - Z @ B_hat @ Phi.T
    Omega = E.T @ E / (n - ncol)
    Omega = 0.5 * (Omega + Omega.T)
    coef_cov = H @ Omega @ H.T
    Sigma_M = np.kron(ZtZ_inv, 0.5 * (coef_cov + coef_cov.T))
    return FosrFit(
        basis=basis,
        B_hat=B_hat,
        Sigma_M=Sigma_M,
        Omega_hat=Omega,
        grid=np.asarray(study.grid, dtype=float),
        design_labels=tuple(study.design_labels()),
        Phi=Phi,
    )


def fit_fosr_vectorized(study: StudyData, basis: BasisSystem) -> np.ndarray:
    """Solve the stacked system ``vec(M^T) = (Z kron Phi) vec(B^T)`` directly; returns ``B_hat``.

    Memory grows as ``n T (p+2) K``; intended for cross-checks on small data.
    """
    Z = study.design()
    Phi = eval_basis(basis, study.grid)
    X = np.kron(Z, Phi)
    y = np.asarray(study.mediator, dtype=float).ravel()
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return coef.reshape(Z.shape[1], Phi.shape[1])


def _coef_matrix(theta_M, fit: FosrFit) -> np.ndarray:
    B = np.asarray(theta_M, dtype=float)
    if B.size != fit.B_hat.size:
        raise ValueError(f"theta_M has {B.size} entries, expected {fit.B_hat.size}")
    return B.reshape(fit.B_hat.shape)


def predict_mean_curve(fit: FosrFit, z, theta_M=None) -> np.ndarray:
    """Mean mediator curve ``Phi B^T z`` for a design row (or an ``m x (p+2)`` block of rows)."""
    B = fit.B_hat if theta_M is None else _coef_matrix(theta_M, fit)
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != B.shape[0]:
        raise ValueError(f"design row has length {z.shape[-1]}, expected {B.shape[0]}")
    return z @ B @ fit.Phi.T


def draw_mediator(theta_M, fit: FosrFit, z, rng, noise: bool = True, factor=None) -> np.ndarray:
    """Simulate mediator curves ``Phi B(theta)^T z + eps`` with ``eps ~ N(0, Omega_hat)``.

    ``z`` may be a single design row or a block of rows; one curve is drawn per
    row. ``factor`` lets callers reuse a precomputed ``psd_factor(Omega_hat)``.
    """
    mean = predict_mean_curve(fit, z, theta_M)
    if not noise:
        return mean
    L = psd_factor(fit.Omega_hat) if factor is None else factor
    eps = rng.standard_normal(mean.shape)
    return mean + eps @ L.T
