"""Analysis pipeline and replication benchmark.

``analyze`` runs mediator model -> FPCA -> outcome model on one study;
``run_benchmark`` repeats simulate/analyze/mediate over replications and
scores the estimates with percent absolute bias, coverage, average and
empirical standard errors.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from fcma.basis import BasisSystem, gcv_select, smoother_matrix
from fcma.config import RunConfig
from fcma.dataset import StudyData, validate, DataError
from fcma.fosr import FosrFit, fit_fosr
from fcma.fpca import FpcaBasis, fit_fpca, select_ncomp
from fcma.mediate import ESTIMANDS, EffectEstimates, child_seed, run_mediation
from fcma.simgen import gen_replication, make_scenario, oracle_effects
from fcma.zipmodel import ZipFit, build_fpcr_design, fit_zip

log = logging.getLogger(__name__)

# child-seed keys under the master seed
ORACLE_KEY = 0
REPLICATION_KEY = 1
SINGLE_RUN_KEY = 2
DATA_SUBKEY = 0
MEDIATE_SUBKEY = 1


class FailureBudgetExceeded(RuntimeError):
    def __init__(self, failures, n_total):
        self.failures = failures
        self.n_total = n_total
        super().__init__(f"{len(failures)} of {n_total} replications failed")


@dataclass
class MetricsTable:
    truth: np.ndarray
    bias_pct: np.ndarray
    ase: np.ndarray
    ese: np.ndarray
    ecp_pct: np.ndarray
    n_reps: int
    bias_relative: np.ndarray = None  # False where truth == 0 and BIAS is absolute

    def rows(self):
        for k, name in enumerate(ESTIMANDS):
            yield name, self.truth[k], self.bias_pct[k], self.ase[k], self.ese[k], self.ecp_pct[k]

    def display(self) -> str:
        lines = [f"{'estimand':<9}{'true':>8}{'BIAS(%)':>9}{'ASE':>8}{'ESE':>8}{'ECP(%)':>8}"]
        for name, tv, b, a, e, c in self.rows():
            lines.append(f"{name:<9}{tv:>8.2f}{b:>9.2f}{a:>8.3f}{e:>8.3f}{c:>8.1f}")
        lines.append(f"replications: {self.n_reps}")
        return "\n".join(lines)


def _colmean(x):
    # correctly rounded sums: result does not depend on replication order
    return np.array([math.fsum(col) for col in x.T]) / x.shape[0]


def _colsd(x):
    d = x - x.min(axis=0)  # order-free shift; constant columns give exactly 0
    d = d - _colmean(d)
    return np.sqrt(_colmean(d * d) * x.shape[0] / (x.shape[0] - 1))


def compute_metrics(points, ses, cis, truth, bias: str = "auto") -> MetricsTable:
    """BIAS, ECP, ASE and ESE across replications.

    Parameters
    ----------
    points, ses : (R, 5) arrays
    cis : (R, 5, 2) array of interval bounds
    truth : (5,) array
    bias : {"auto", "relative"}
        With ``"auto"`` a zero true value falls back to absolute bias (flagged
        in ``bias_relative``); ``"relative"`` raises instead.
    """
    points = np.asarray(points, dtype=float)
    ses = np.asarray(ses, dtype=float)
    cis = np.asarray(cis, dtype=float)
    truth = np.asarray(truth, dtype=float)
    R = points.shape[0]
    if R < 2:
        raise ValueError("need at least two replications")
    if points.shape != ses.shape or cis.shape != points.shape + (2,):
        raise ValueError("points, ses and cis have inconsistent shapes")
    zero = truth == 0
    if bias == "relative" and zero.any():
        raise ValueError("relative bias requested but a true value is zero")
    gap = np.abs(_colmean(points) - truth)
    bias_pct = np.where(zero, gap, gap / np.where(zero, 1.0, np.abs(truth)) * 100.0)
    covered = (cis[..., 0] <= truth) & (truth <= cis[..., 1])
    return MetricsTable(
        truth=truth,
        bias_pct=bias_pct,
        ase=_colmean(ses),
        ese=_colsd(points),
        ecp_pct=covered.mean(axis=0) * 100.0,
        n_reps=R,
        bias_relative=~zero,
    )


@dataclass
class Analysis:
    study: StudyData
    fit_m: FosrFit
    fb: FpcaBasis
    q: int
    fit_y: ZipFit
    gcv_ks: np.ndarray
    gcv_scores: np.ndarray
    nbasis: int
    q_threshold: int


def analyze(study: StudyData, cfg: RunConfig, with_gcv: bool = True) -> Analysis:
    """Fit the mediator model, FPCA and the functional ZIP outcome model."""
    report = validate(study)
    if not report.ok:
        raise DataError(str(report))
    ks = scores = np.empty(0)
    if with_gcv or cfg.nbasis == "gcv":
        kmax = min(cfg.gcv_kmax, study.n_time)
        kmin = min(cfg.gcv_kmin, kmax)
        if cfg.basis_kind == "fourier":
            k_range = [k for k in range(kmin, kmax + 1) if k % 2]
        elif cfg.basis_kind == "bspline":
            k_range = range(max(kmin, 4), kmax + 1)
        else:
            k_range = [1]
        best, ks, scores = gcv_select(study.mediator, cfg.basis_kind, k_range, study.grid)
    nbasis = best if cfg.nbasis == "gcv" else int(cfg.nbasis)
    fit_m = fit_fosr(study, BasisSystem(cfg.basis_kind, nbasis))
    fb = fit_fpca(study.mediator, study.grid, smoother=smoother_matrix(fit_m.Phi) if cfg.presmooth else None)
    q_thr = select_ncomp(fb, cfg.fpca_threshold)
    q = q_thr if cfg.q_override is None else int(cfg.q_override)
    fit_y = fit_zip(build_fpcr_design(fb, study, q), study.outcome)
    return Analysis(study, fit_m, fb, q, fit_y, ks, scores, nbasis, q_thr)


@dataclass
class ReplicationResult:
    r: int
    ok: bool
    point: Optional[np.ndarray] = None
    se: Optional[np.ndarray] = None
    ci: Optional[np.ndarray] = None
    error: str = ""
    analysis: Optional[Analysis] = None
    draws: Optional[np.ndarray] = None
    estimates: Optional[EffectEstimates] = None


def run_replication(cfg: RunConfig, r: int, keep: bool = False) -> ReplicationResult:
    sc = make_scenario(cfg.scenario, n=cfg.n, T=cfg.T, x_reading=cfg.x_reading)
    try:
        study = gen_replication(sc, child_seed(cfg.seed, REPLICATION_KEY, r, DATA_SUBKEY))
        an = analyze(study, cfg, with_gcv=keep)
        if not an.fit_y.converged:
            raise RuntimeError(f"outcome model did not converge (gradient {an.fit_y.gradient_norm:.3g})")
        draws, est = run_mediation(
            study,
            an.fit_m,
            an.fit_y,
            an.fb,
            J=cfg.J,
            seed=child_seed(cfg.seed, REPLICATION_KEY, r, MEDIATE_SUBKEY),
            n_inner=cfg.n_inner,
            mediator_noise=cfg.mediator_noise,
        )
    except (np.linalg.LinAlgError, ValueError, FloatingPointError, RuntimeError) as exc:
        log.warning("replication %d failed: %s", r, exc)
        return ReplicationResult(r=r, ok=False, error=f"{type(exc).__name__}: {exc}")
    ci = np.stack([est.ci_low, est.ci_high], axis=-1)
    res = ReplicationResult(r=r, ok=True, point=est.point, se=est.se, ci=ci)
    if keep:
        res.analysis, res.draws, res.estimates = an, draws, est
    return res


def _run_one(args):
    cfg, r = args
    return run_replication(cfg, r, keep=(r == 0))


@dataclass
class BenchmarkResult:
    cfg: RunConfig
    truth: np.ndarray
    truth_se: np.ndarray
    metrics: Optional[MetricsTable]
    replications: List[ReplicationResult] = field(default_factory=list)

    @property
    def failures(self):
        return [rep for rep in self.replications if not rep.ok]

    @property
    def first_success(self) -> Optional[ReplicationResult]:
        return next((rep for rep in self.replications if rep.ok and rep.analysis is not None), None)


def oracle_for(cfg: RunConfig):
    sc = make_scenario(cfg.scenario, n=cfg.n, T=cfg.T, x_reading=cfg.x_reading)
    return oracle_effects(sc, N=cfg.oracle_n, seed=child_seed(cfg.seed, ORACLE_KEY))


def run_benchmark(cfg: RunConfig, progress=None) -> BenchmarkResult:
    """Simulate, analyse and mediate ``cfg.R`` replications, then score them against the oracle.

    Replication ``r`` draws all randomness from child seeds of ``cfg.seed``,
    so results do not depend on ``cfg.jobs``. Failed replications are
    skipped; more than ``cfg.max_fail_frac`` failures raises
    :class:`FailureBudgetExceeded`.
    """
    truth, truth_se = oracle_for(cfg)
    tasks = [(cfg, r) for r in range(cfg.R)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            reps = []
            for res in pool.map(_run_one, tasks):
                reps.append(res)
                if progress:
                    progress(res)
    else:
        reps = []
        for task in tasks:
            res = _run_one(task)
            reps.append(res)
            if progress:
                progress(res)
    ok_idx = [i for i, rep in enumerate(reps) if rep.ok]
    if ok_idx and reps[ok_idx[0]].analysis is None:
        reps[ok_idx[0]] = run_replication(cfg, reps[ok_idx[0]].r, keep=True)
    result = BenchmarkResult(cfg, truth, truth_se, None, reps)
    fails = result.failures
    if len(fails) > cfg.max_fail_frac * cfg.R:
        raise FailureBudgetExceeded(fails, cfg.R)
    ok = [rep for rep in reps if rep.ok]
    if len(ok) >= 2:
        result.metrics = compute_metrics(
            np.array([rep.point for rep in ok]),
            np.array([rep.se for rep in ok]),
            np.array([rep.ci for rep in ok]),
            truth,
        )
    return result
