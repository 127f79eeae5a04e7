"""Functional principal component analysis on a regular grid.

Integrals over [0, 1] use the trapezoidal rule. The covariance operator is
discretised as ``W^{1/2} C W^{1/2}`` so that eigenfunctions come out
orthonormal in the quadrature inner product ``<f, g>_w = sum_j w_j f_j g_j``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


def trapezoid_weights(grid) -> np.ndarray:
    t = np.asarray(grid, dtype=float)
    if len(t) < 2:
        return np.ones_like(t)
    dt = np.diff(t)
    w = np.zeros_like(t)
    w[:-1] += dt / 2
    w[1:] += dt / 2
    return w


@dataclass(frozen=True)
class FpcaBasis:
    mu_hat: np.ndarray
    eigenfunctions: np.ndarray  # (q_max, T)
    eigenvalues: np.ndarray
    quad_weights: np.ndarray
    var_explained: np.ndarray
    grid: np.ndarray
    smoother: Optional[np.ndarray] = None  # (T, T) pre-smoothing hat matrix, or None

    @property
    def q_max(self) -> int:
        return len(self.eigenvalues)

    def prepare(self, curves) -> np.ndarray:
        """Apply the pre-smoothing used at fit time (identity if none)."""
        curves = np.asarray(curves, dtype=float)
        return curves if self.smoother is None else curves @ self.smoother.T

    def scores(self, curves, q: int) -> np.ndarray:
        """Pre-smooth then project; accepts one curve or an ``n x T`` matrix."""
        return project_scores(self, self.prepare(curves), q)

    def reconstruct(self, scores) -> np.ndarray:
        scores = np.asarray(scores, dtype=float)
        q = scores.shape[-1]
        return self.mu_hat + scores @ self.eigenfunctions[:q]


def _orient(v: np.ndarray, w: np.ndarray) -> np.ndarray:
    integral = float(w @ v)
    if abs(integral) > 1e-8 * np.sqrt(w @ (v * v)):
        return v if integral > 0 else -v
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    return v if nz.size == 0 or v[nz[0]] > 0 else -v


def fit_fpca(curves, grid, smoother=None) -> FpcaBasis:
    """Estimate mean, eigenfunctions and eigenvalues from curves observed on ``grid``.

    Parameters
    ----------
    curves : (n, T) array
    grid : (T,) array
    smoother : (T, T) array, optional
        Hat matrix applied to every curve first (and later by ``FpcaBasis.scores``).
    """
    X = np.asarray(curves, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("FPCA needs an n x T matrix with n >= 2")
    if not np.isfinite(X).all():
        raise ValueError("curves contain nonfinite values")
    if smoother is not None:
        X = X @ smoother.T
    n, T = X.shape
    w = trapezoid_weights(grid)
    mu = X.mean(axis=0)
    Xc = X - mu
    C = Xc.T @ Xc / n
    sw = np.sqrt(w)
    A = sw[:, None] * C * sw[None, :]
    evals, U = np.linalg.eigh(0.5 * (A + A.T))
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    V = (U[:, order] / sw[:, None]).T
    V = np.array([_orient(v, w) for v in V])

    total = evals.sum()
    if total > 0:
        var_exp = np.cumsum(evals) / total
        var_exp[-1] = 1.0
    else:
        var_exp = np.ones_like(evals)
    return FpcaBasis(
        mu_hat=mu,
        eigenfunctions=V,
        eigenvalues=evals,
        quad_weights=w,
        var_explained=var_exp,
        grid=np.asarray(grid, dtype=float),
        smoother=smoother,
    )


def project_scores(fb: FpcaBasis, curve, q: int) -> np.ndarray:
    """Scores ``xi_j = int (M - mu) v_j dt`` by trapezoidal quadrature, j = 1..q."""
    if not 0 <= q <= fb.q_max:
        raise ValueError(f"q must be in [0, {fb.q_max}], got {q}")
    curve = np.asarray(curve, dtype=float)
    if curve.shape[-1] != len(fb.mu_hat):
        raise ValueError(f"curve length {curve.shape[-1]} does not match grid length {len(fb.mu_hat)}")
    return ((curve - fb.mu_hat) * fb.quad_weights) @ fb.eigenfunctions[:q].T


def select_ncomp(fb: FpcaBasis, threshold: float = 0.90) -> int:
    """Smallest number of components whose cumulative variance share reaches ``threshold``."""
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    # small tolerance so that e.g. 0.9 of (9, 1) counts as reached
    hits = np.flatnonzero(fb.var_explained >= threshold - 1e-12)
    return int(hits[0]) + 1 if hits.size else fb.q_max
