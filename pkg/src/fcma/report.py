"""CSV, metadata and figure outputs.

Numbers are written with 12 significant digits. Every file is written to a
temporary name and renamed into place.
"""

from __future__ import annotations

import csv
import os
import platform
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy

from fcma import __version__
from fcma.mediate import ESTIMANDS
from fcma.plotting import line_figure
from fcma.zipmodel import outcome_coef_functions


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".12g")


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    os.replace(tmp, path)
    return path


def write_text(path, text: str) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
    return path


def write_effects(path, est):
    return write_csv(path, ["estimand", "point", "se", "ci_low", "ci_high"], est.rows())


def write_draws(path, draws):
    return write_csv(path, ["j", *ESTIMANDS], ([j + 1, *row] for j, row in enumerate(draws)))


def write_oracle(path, values, mc_se):
    return write_csv(path, ["estimand", "value", "mc_se"], zip(ESTIMANDS, values, mc_se))


def write_metrics(path, table):
    return write_csv(
        path,
        ["estimand", "true_value", "bias_pct", "ase", "ese", "ecp_pct", "n_reps"],
        ([*row, table.n_reps] for row in table.rows()),
    )


def write_replications(path, reps):
    header = ["r", "status"]
    for name in ESTIMANDS:
        header += [name, f"{name}_se", f"{name}_ci_low", f"{name}_ci_high"]
    rows = []
    for rep in reps:
        if rep.ok:
            vals = []
            for k in range(len(ESTIMANDS)):
                vals += [rep.point[k], rep.se[k], rep.ci[k, 0], rep.ci[k, 1]]
            rows.append([rep.r, "ok", *vals])
        else:
            rows.append([rep.r, "failed: " + rep.error] + [""] * (4 * len(ESTIMANDS)))
    return write_csv(path, header, rows)


def read_replications(path):
    """Load ``replications.csv``-style estimates (e.g. from an external method) for ``compute_metrics``."""
    pts, ses, cis = [], [], []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row.get("status", "ok") != "ok":
                continue
            pts.append([float(row[n]) for n in ESTIMANDS])
            ses.append([float(row[f"{n}_se"]) for n in ESTIMANDS])
            cis.append([[float(row[f"{n}_ci_low"]), float(row[f"{n}_ci_high"])] for n in ESTIMANDS])
    return np.array(pts), np.array(ses), np.array(cis)


def emit_analysis(an, directory) -> list:
    """Curve files and figures for one fitted study."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    t = an.fit_m.grid
    written = []

    if an.gcv_ks.size:
        written.append(write_csv(d / "gcv.csv", ["nbasis", "gcv"], zip(an.gcv_ks, an.gcv_scores)))
        written.append(
            line_figure(d / "gcv.svg", an.gcv_ks, {"GCV": an.gcv_scores}, "number of basis functions", "GCV", marker="o")
        )

    coefs = an.fit_m.coef_functions()
    names = ["beta0", "beta1"] + [f"beta2_{k + 1}" for k in range(coefs.shape[0] - 2)]
    written.append(write_csv(d / "fosr_coefs.csv", ["t", *names], np.column_stack([t, coefs.T])))
    written.append(
        line_figure(d / "fosr_coefs.svg", t, dict(zip(names, coefs)), "t", "coefficient function", "mediator model")
    )

    q = an.q
    V = an.fb.eigenfunctions[:q]
    vnames = [f"v{j + 1}" for j in range(q)]
    written.append(write_csv(d / "fpca.csv", ["t", "mu", *vnames], np.column_stack([t, an.fb.mu_hat, V.T])))
    written.append(
        line_figure(d / "fpca.svg", t, {"mean": an.fb.mu_hat, **dict(zip(vnames, V))}, "t", "value", "mean and eigenfunctions")
    )

    a1, g1 = outcome_coef_functions(an.fit_y, an.fb, q)
    written.append(write_csv(d / "outcome_coefs.csv", ["t", "alpha1", "gamma1"], np.column_stack([t, a1, g1])))
    written.append(
        line_figure(d / "outcome_coefs.svg", t, {"alpha1 (zero part)": a1, "gamma1 (count part)": g1}, "t", "coefficient function", "outcome model")
    )

    fy = an.fit_y
    se = fy.se
    k = len(fy.alpha)
    labels = list(fy.labels) or [f"c{j}" for j in range(k)]
    rows = [("zero", labels[j], fy.alpha[j], se[j]) for j in range(k)]
    rows += [("count", labels[j], fy.gamma[j], se[k + j]) for j in range(k)]
    written.append(write_csv(d / "zipfit.csv", ["part", "term", "estimate", "se"], rows))
    return written


def run_meta(cfg, extra: dict) -> str:
    lines = ["[config]"]
    lines += [f"{k} = {v}" for k, v in cfg.items()]
    lines.append("")
    lines.append("[choices]")
    lines += [
        "quadrature = trapezoidal on the observation grid",
        "spline_knots = equally spaced interior knots, clamped ends",
        "gcv = sum over curves of (SSE_i / T) / (1 - K/T)^2",
        "fosr_residual_df = n - (p + 2)",
        "fpca_covariance_divisor = n",
        f"fpca_presmooth = {cfg.presmooth}",
        "zip_init = Poisson fit on positive counts; zero intercept logit(max(0.05, excess zero share))",
        "zip_optimizer = BFGS then Newton polish, gradient sup-norm < 1e-6, max 500 iterations",
        "zip_covariance = inverse of central-difference Hessian of analytic gradient, step 1e-5",
        "potential_outcomes = ZIP conditional means (1 - p) * lambda",
        f"mediator_noise = {cfg.mediator_noise}",
        "point = median over draws; se = sd over draws (ddof 1); ci = linear-interpolation quantiles 2.5/97.5",
        f"x_reading = {cfg.x_reading} (covariate N(1, 3): 3 read as {'standard deviation' if cfg.x_reading == 'sd' else 'variance'})",
    ]
    if extra:
        lines.append("")
        lines.append("[run]")
        lines += [f"{k} = {v}" for k, v in extra.items()]
    lines.append("")
    lines.append("[versions]")
    lines += [
        f"fcma = {__version__}",
        f"numpy = {np.__version__}",
        f"scipy = {scipy.__version__}",
        f"python = {platform.python_version()}",
    ]
    return "\n".join(lines) + "\n"


def emit_outputs(result, directory) -> list:
    """Write every benchmark artifact into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = [write_oracle(d / "oracle.csv", result.truth, result.truth_se)]
    if result.metrics is not None:
        written.append(write_metrics(d / "metrics.csv", result.metrics))
    written.append(write_replications(d / "replications.csv", result.replications))
    first = result.first_success
    extra = {
        "replications": result.cfg.R,
        "successes": result.cfg.R - len(result.failures),
        "failed": ", ".join(f"r={rep.r} ({rep.error})" for rep in result.failures) or "none",
    }
    if first is not None:
        written.append(write_effects(d / "effects.csv", first.estimates))
        written.append(write_draws(d / "draws.csv", first.draws))
        written += emit_analysis(first.analysis, d)
        extra.update(
            example_replication=first.r,
            nbasis=first.analysis.nbasis,
            q=first.analysis.q,
            q_at_threshold=first.analysis.q_threshold,
        )
    written.append(write_text(d / "run_meta.txt", run_meta(result.cfg, extra)))
    return written
