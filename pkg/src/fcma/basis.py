"""Basis systems on [0, 1], least-squares smoothing and GCV choice of the basis count."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Tuple

import numpy as np

KINDS = ("bspline", "fourier", "constant")
SPLINE_ORDER = 4  # cubic


@dataclass(frozen=True)
class BasisSystem:
    """A basis on [0, 1].

    ``kind`` is one of ``"bspline"`` (cubic, clamped, equally spaced interior
    knots), ``"fourier"`` (odd ``nbasis``) or ``"constant"``.
    """

    kind: str = "bspline"
    nbasis: int = 5

    def __post_init__(self):
        if self.kind == "bspline-cubic":
            object.__setattr__(self, "kind", "bspline")
        if self.kind not in KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "bspline" and self.nbasis < SPLINE_ORDER:
            raise ValueError(f"cubic B-spline basis needs nbasis >= 4, got {self.nbasis}")
        if self.kind == "fourier" and (self.nbasis < 1 or self.nbasis % 2 == 0):
            raise ValueError(f"Fourier basis needs an odd nbasis >= 1, got {self.nbasis}")
        if self.kind == "constant" and self.nbasis != 1:
            raise ValueError("constant basis has exactly one function")

    @property
    def knots(self) -> np.ndarray:
        if self.kind != "bspline":
            return np.empty(0)
        n_interior = self.nbasis - SPLINE_ORDER
        interior = np.linspace(0.0, 1.0, n_interior + 2)[1:-1]
        return np.concatenate([np.zeros(SPLINE_ORDER), interior, np.ones(SPLINE_ORDER)])

    def __str__(self) -> str:
        return f"{self.kind}(nbasis={self.nbasis})"


def _bspline_matrix(knots: np.ndarray, t: np.ndarray, order: int = SPLINE_ORDER) -> np.ndarray:
    # Cox-de Boor recursion, vectorised over t.
    n_funcs = len(knots) - order
    n_spans = len(knots) - 1
    B = np.zeros((len(t), n_spans))
    for i in range(n_spans):
        lo, hi = knots[i], knots[i + 1]
        if hi > lo:
            B[:, i] = (t >= lo) & (t < hi)
    # right endpoint belongs to the last nonempty span
    last = max(i for i in range(n_spans) if knots[i + 1] > knots[i])
    B[t == knots[-1], last] = 1.0

    for k in range(2, order + 1):
        nxt = np.zeros((len(t), n_spans - k + 1))
        for i in range(n_spans - k + 1):
            d1 = knots[i + k - 1] - knots[i]
            d2 = knots[i + k] - knots[i + 1]
            term = np.zeros(len(t))
            if d1 > 0:
                term += (t - knots[i]) / d1 * B[:, i]
            if d2 > 0:
                term += (knots[i + k] - t) / d2 * B[:, i + 1]
            nxt[:, i] = term
        B = nxt
    return B[:, :n_funcs]


def _fourier_matrix(nbasis: int, t: np.ndarray) -> np.ndarray:
    cols = [np.ones_like(t)]
    for m in range(1, (nbasis - 1) // 2 + 1):
        w = 2.0 * np.pi * m * t
        cols.append(np.sqrt(2.0) * np.sin(w))
        cols.append(np.sqrt(2.0) * np.cos(w))
    return np.column_stack(cols)


def eval_basis(basis: BasisSystem, grid) -> np.ndarray:
    """Evaluate the basis on ``grid``: entry ``(j, k)`` is ``phi_k(t_j)``.

    Raises
    ------
    ValueError
        If a grid point lies outside [0, 1].
    """
    t = np.atleast_1d(np.asarray(grid, dtype=float))
    if np.any((t < 0) | (t > 1)) or not np.isfinite(t).all():
        raise ValueError("grid points must lie in [0, 1]")
    if basis.kind == "bspline":
        return _bspline_matrix(basis.knots, t)
    if basis.kind == "fourier":
        return _fourier_matrix(basis.nbasis, t)
    return np.ones((len(t), 1))


def projection(Phi: np.ndarray) -> np.ndarray:
    """Return ``(Phi^T Phi)^{-1} Phi^T``; raises on a rank-deficient basis matrix."""
    Phi = np.asarray(Phi, dtype=float)
    T, K = Phi.shape
    if T < K or np.linalg.matrix_rank(Phi) < K:
        raise np.linalg.LinAlgError(
            f"basis matrix is rank deficient ({K} functions on {T} grid points); reduce nbasis"
        )
    return np.linalg.solve(Phi.T @ Phi, Phi.T)


def smoother_matrix(Phi: np.ndarray) -> np.ndarray:
    """Hat matrix ``Phi (Phi^T Phi)^{-1} Phi^T`` mapping raw grid values to fitted values."""
    return Phi @ projection(Phi)


def smooth_curve(obs, Phi) -> np.ndarray:
    """Least-squares basis coefficients of one curve (length T) or of each row of an ``n x T`` matrix."""
    obs = np.asarray(obs, dtype=float)
    H = projection(Phi)
    if obs.shape[-1] != H.shape[1]:
        raise ValueError(f"curve length {obs.shape[-1]} does not match basis matrix with {H.shape[1]} rows")
    return obs @ H.T


def gcv_score(obs_matrix, Phi) -> float:
    """Summed per-curve GCV: ``sum_i (SSE_i / T) / (1 - K/T)^2``."""
    Y = np.atleast_2d(np.asarray(obs_matrix, dtype=float))
    T, K = Phi.shape
    resid = Y - Y @ smoother_matrix(Phi).T
    sse = np.einsum("ij,ij->i", resid, resid)
    denom = (1.0 - K / T) ** 2
    if denom == 0.0:
        return float("inf")
    return float(np.sum(sse / T) / denom)


def gcv_select(obs_matrix, kind: str, k_range: Iterable[int], grid) -> Tuple[int, np.ndarray, np.ndarray]:
    """Choose the number of basis functions by GCV.

    Returns
    -------
    best : int
        Basis count with the smallest score (first one on ties).
    ks : ndarray of int
        Candidate counts in increasing order.
    scores : ndarray
        GCV score for each candidate.
    """
    ks = np.array(sorted(set(int(k) for k in k_range)), dtype=int)
    if ks.size == 0:
        raise ValueError("empty nbasis range")
    T = len(grid)
    if ks.max() > T:
        raise ValueError(f"nbasis {ks.max()} exceeds the number of grid points {T}")
    scores = np.array([gcv_score(obs_matrix, eval_basis(BasisSystem(kind, int(k)), grid)) for k in ks])
    return int(ks[np.argmin(scores)]), ks, scores
