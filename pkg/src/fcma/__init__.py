"""Causal mediation analysis with a functional mediator and a zero-inflated count outcome."""

from fcma.basis import BasisSystem, eval_basis, gcv_select, smooth_curve
from fcma.dataset import StudyData, ValidationReport, validate
from fcma.fosr import FosrFit, draw_mediator, fit_fosr, predict_mean_curve
from fcma.fpca import FpcaBasis, fit_fpca, project_scores, select_ncomp
from fcma.mediate import ESTIMANDS, EffectEstimates, run_mediation
from fcma.simgen import Scenario, gen_replication, oracle_effects
from fcma.zipmodel import ZipFit, build_fpcr_design, fit_zip, zip_loglik, zip_mean, zip_pmf

__version__ = "0.1.0"

__all__ = [
    "ESTIMANDS",
    "BasisSystem",
    "EffectEstimates",
    "FosrFit",
    "FpcaBasis",
    "Scenario",
    "StudyData",
    "ValidationReport",
    "ZipFit",
    "build_fpcr_design",
    "draw_mediator",
    "eval_basis",
    "fit_fosr",
    "fit_fpca",
    "fit_zip",
    "gcv_select",
    "gen_replication",
    "oracle_effects",
    "predict_mean_curve",
    "project_scores",
    "run_mediation",
    "select_ncomp",
    "smooth_curve",
    "validate",
    "zip_loglik",
    "zip_mean",
    "zip_pmf",
]
