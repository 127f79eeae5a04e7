"""Quasi-Bayesian Monte Carlo estimation of total, natural direct and natural indirect effects.

For each of ``J`` parameter draws from the asymptotic normal distributions of
the mediator and outcome models, every subject's potential mediator curves
under ``a = 0, 1`` are simulated, the four potential outcomes
``Y(a, M(a'))`` are imputed as ZIP conditional means, and the effects are
averaged over subjects. Medians, standard deviations and percentile
intervals across draws summarise the result.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from fcma.dataset import StudyData
from fcma.fosr import FosrFit, psd_factor
from fcma.fpca import FpcaBasis
from fcma.zipmodel import ZipFit, zip_mean

ESTIMANDS = ("te", "nie1", "nde0", "nie0", "nde1")


def as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def child_seed(seed, *keys: int) -> np.random.SeedSequence:
    """Deterministic child of ``seed`` addressed by ``keys`` (independent of spawn order)."""
    ss = as_seed_sequence(seed)
    return np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + tuple(int(k) for k in keys))


@dataclass(frozen=True)
class EffectEstimates:
    point: np.ndarray
    se: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    meta: dict = field(default_factory=dict)

    def rows(self):
        for k, name in enumerate(ESTIMANDS):
            yield name, self.point[k], self.se[k], self.ci_low[k], self.ci_high[k]

    def as_dict(self):
        return {name: dict(point=pt, se=se, ci_low=lo, ci_high=hi) for name, pt, se, lo, hi in self.rows()}


def summarize_draws(draws: np.ndarray, meta: Optional[dict] = None) -> EffectEstimates:
    """Median, sample SD and 2.5/97.5% quantiles (linear interpolation) per column."""
    draws = np.asarray(draws, dtype=float)
    return EffectEstimates(
        point=np.median(draws, axis=0),
        se=np.std(draws, axis=0, ddof=1),
        ci_low=np.quantile(draws, 0.025, axis=0),
        ci_high=np.quantile(draws, 0.975, axis=0),
        meta=dict(meta or {}),
    )


def _snap(values: np.ndarray) -> np.ndarray:
    # Round onto a shared dyadic grid fine enough (2^-50 relative) that every
    # difference and every sum of two differences below is exact in float64.
    m = float(np.max(np.abs(values)))
    if m == 0.0 or not np.isfinite(m):
        return values
    quantum = np.ldexp(1.0, max(int(np.frexp(m)[1]) - 50, -1074))  # floor: smallest subnormal
    return np.round(values / quantum) * quantum


def effects_from_means(means) -> np.ndarray:
    """Effects from the four mean potential outcomes ``means[a, a'] = E Y(a, M(a'))``.

    Returns ``(TE, NIE1, NDE0, NIE0, NDE1)``; the decompositions
    ``TE = NIE1 + NDE0 = NIE0 + NDE1`` hold exactly in floating point.
    """
    m = _snap(np.asarray(means, dtype=float))
    m11, m10, m01, m00 = m[1, 1], m[1, 0], m[0, 1], m[0, 0]
    return np.array([m11 - m00, m11 - m10, m10 - m00, m01 - m00, m11 - m01])


class _Engine:
    """Precomputed linear maps shared by all draws of one mediation run.

    Mediator curves enter the outcome model only through their FPCA scores,
    which are linear in the curve. Scores of a simulated curve
    ``Phi B^T z + eps`` are therefore drawn directly as
    ``mean_scores + N(0, P^T Omega P)``, where ``P`` maps a grid curve to its
    (pre-smoothed) scores; this has exactly the distribution of projecting a
    full simulated curve.
    """

    def __init__(self, study: StudyData, fit_m: FosrFit, fit_y: ZipFit, fb: FpcaBasis, mediator_noise: bool):
        self.q = len(fit_y.alpha) - 2 - study.p
        if self.q < 0 or self.q > fb.q_max:
            raise ValueError("outcome model size is inconsistent with the study covariates and FPCA basis")
        self.study = study
        self.fit_m = fit_m
        self.fit_y = fit_y
        Vq = fb.eigenfunctions[: self.q]
        WV = fb.quad_weights[:, None] * Vq.T  # (T, q)
        P = WV if fb.smoother is None else fb.smoother.T @ WV
        self.offset = fb.mu_hat @ WV
        self.curve_to_scores = fit_m.Phi.T @ P  # (K, q): basis coefficients -> scores
        self.noise_factor = None
        if mediator_noise and self.q > 0:
            L = psd_factor(fit_m.Omega_hat)
            self.noise_factor = psd_factor((L.T @ P).T @ (L.T @ P))
        self.Z = {a: study.design(treatment=a) for a in (0, 1)}
        self.tail = {a: np.column_stack([np.full(study.n, float(a)), study.covariates]) for a in (0, 1)}
        self.factor_M = psd_factor(fit_m.Sigma_M)
        self.factor_Y = psd_factor(fit_y.Sigma_Y)

    def draw_params(self, rng):
        theta_M = self.fit_m.theta_M + self.factor_M @ rng.standard_normal(self.fit_m.theta_M.size)
        theta_Y = self.fit_y.theta_Y + self.factor_Y @ rng.standard_normal(self.fit_y.theta_Y.size)
        return theta_M, theta_Y

    def potential_means(self, theta_M, theta_Y, rng, n_inner: int) -> np.ndarray:
        n = self.study.n
        B = np.asarray(theta_M, dtype=float).reshape(self.fit_m.B_hat.shape)
        mean_scores = {a: self.Z[a] @ B @ self.curve_to_scores - self.offset for a in (0, 1)}
        totals = np.zeros((2, 2))
        for _ in range(n_inner):
            scores = {}
            for a_med in (0, 1):
                s = mean_scores[a_med]
                if self.noise_factor is not None:
                    s = s + rng.standard_normal((n, self.q)) @ self.noise_factor.T
                scores[a_med] = s
            for a in (0, 1):
                for a_med in (0, 1):
                    rows = np.column_stack([np.ones(n), scores[a_med], self.tail[a]])
                    totals[a, a_med] += zip_mean(theta_Y, rows)[2].mean()
        return totals / n_inner


def draw_model_params(fit_m: FosrFit, fit_y: ZipFit, rng):
    """One draw of ``(theta_M, theta_Y)`` from ``N(estimate, covariance)`` for each model."""
    theta_M = fit_m.theta_M + psd_factor(fit_m.Sigma_M) @ rng.standard_normal(fit_m.theta_M.size)
    theta_Y = fit_y.theta_Y + psd_factor(fit_y.Sigma_Y) @ rng.standard_normal(fit_y.theta_Y.size)
    return theta_M, theta_Y


def impute_draw_effects(
    theta_M,
    theta_Y,
    study: StudyData,
    fit_m: FosrFit,
    fit_y: ZipFit,
    fb: FpcaBasis,
    rng,
    n_inner: int = 1,
    mediator_noise: bool = True,
) -> np.ndarray:
    """Effects ``(TE, NIE1, NDE0, NIE0, NDE1)`` for one parameter draw.

    ``fit_y`` only supplies the outcome-model layout and covariance shape;
    the outcome parameters used are ``theta_Y``.
    """
    if n_inner < 1:
        raise ValueError("n_inner must be >= 1")
    engine = _Engine(study, fit_m, fit_y, fb, mediator_noise)
    return effects_from_means(engine.potential_means(theta_M, theta_Y, rng, n_inner))


def run_mediation(
    study: StudyData,
    fit_m: FosrFit,
    fit_y: ZipFit,
    fb: FpcaBasis,
    J: int = 1000,
    seed=0,
    n_inner: int = 1,
    mediator_noise: bool = True,
    draw_seeds: Optional[Sequence] = None,
):
    """Run ``J`` parameter draws and summarise them.

    Draw ``j`` uses its own random stream, the child ``j`` of ``seed`` (or
    ``draw_seeds[j]`` when given), so the result does not depend on how draws
    are scheduled.

    Returns
    -------
    draws : (J, 5) array
        Columns ordered as ``ESTIMANDS``.
    estimates : EffectEstimates
    """
    if J < 2:
        raise ValueError("J must be at least 2")
    if n_inner < 1:
        raise ValueError("n_inner must be >= 1")
    if draw_seeds is not None and len(draw_seeds) != J:
        raise ValueError("draw_seeds must have one entry per draw")
    engine = _Engine(study, fit_m, fit_y, fb, mediator_noise)
    draws = np.empty((J, len(ESTIMANDS)))
    for j in range(J):
        ss = child_seed(seed, j) if draw_seeds is None else as_seed_sequence(draw_seeds[j])
        rng = np.random.default_rng(ss)
        theta_M, theta_Y = engine.draw_params(rng)
        draws[j] = effects_from_means(engine.potential_means(theta_M, theta_Y, rng, n_inner))
    ss = as_seed_sequence(seed)
    meta = dict(
        J=J,
        seed=ss.entropy,
        spawn_key=tuple(ss.spawn_key),
        mediator_noise=mediator_noise,
        n_inner=n_inner,
        q=engine.q,
    )
    return draws, summarize_draws(draws, meta)
