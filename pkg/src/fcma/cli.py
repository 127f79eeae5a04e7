"""Command line entry point: ``fcma simulate|oracle|fit|mediate|benchmark --config FILE``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from fcma import report
from fcma.config import MODES, ConfigError, RunConfig, load_config
from fcma.dataset import DataError, load_study, write_study
from fcma.harness import (
    SINGLE_RUN_KEY,
    FailureBudgetExceeded,
    analyze,
    oracle_for,
    run_benchmark,
)
from fcma.mediate import child_seed, run_mediation
from fcma.simgen import REFERENCE_TRUTH, gen_replication, make_scenario, resolve_x_reading

log = logging.getLogger("fcma")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _study(cfg: RunConfig):
    if cfg.uses_files:
        return load_study(cfg.subjects, cfg.mediator)
    sc = make_scenario(cfg.scenario, n=cfg.n, T=cfg.T, x_reading=cfg.x_reading)
    return gen_replication(sc, child_seed(cfg.seed, SINGLE_RUN_KEY))


def _source(cfg: RunConfig) -> dict:
    if cfg.uses_files:
        return {"data": f"{cfg.subjects} + {cfg.mediator}"}
    return {"data": f"simulated {cfg.scenario} scenario, seed key ({cfg.seed}, {SINGLE_RUN_KEY})"}


def cmd_simulate(cfg: RunConfig, out: Path):
    study = _study(cfg)
    write_study(study, out)
    report.write_text(out / "run_meta.txt", report.run_meta(cfg, _source(cfg)))
    print(f"wrote {study.n} subjects x {study.n_time} time points to {out}")


def cmd_oracle(cfg: RunConfig, out: Path):
    values, se = oracle_for(cfg)
    report.write_oracle(out / "oracle.csv", values, se)
    extra = {"oracle_n": cfg.oracle_n}
    if cfg.scenario in REFERENCE_TRUTH and cfg.T == 100:
        best, per = resolve_x_reading(cfg.scenario, N=cfg.oracle_n, seed=child_seed(cfg.seed, 0))
        for reading, (vals, _, dev) in per.items():
            extra[f"oracle_{reading}"] = " ".join(f"{v:.4f}" for v in vals) + f" (max deviation {dev:.4f})"
        extra["x_reading_matching_reference_truth"] = best
    report.write_text(out / "run_meta.txt", report.run_meta(cfg, extra))
    for name, v, s in zip(("te", "nie1", "nde0", "nie0", "nde1"), values, se):
        print(f"{name:<6}{v:10.4f}  (mc se {s:.4f})")


def _fit(cfg: RunConfig, out: Path):
    study = _study(cfg)
    an = analyze(study, cfg, with_gcv=True)
    report.emit_analysis(an, out)
    extra = dict(_source(cfg), n=study.n, T=study.n_time, nbasis=an.nbasis, q=an.q, q_at_threshold=an.q_threshold)
    extra.update(
        zip_converged=an.fit_y.converged,
        zip_iterations=an.fit_y.iterations,
        zip_gradient_norm=f"{an.fit_y.gradient_norm:.3g}",
        zip_loglik=report.fmt(an.fit_y.loglik),
        fpca_var_explained=" ".join(f"{v:.4f}" for v in an.fb.var_explained[: max(an.q, 5)]),
    )
    return an, extra


def cmd_fit(cfg: RunConfig, out: Path):
    an, extra = _fit(cfg, out)
    report.write_text(out / "run_meta.txt", report.run_meta(cfg, extra))
    print(f"nbasis = {an.nbasis}, q = {an.q}, outcome model converged = {an.fit_y.converged}")


def cmd_mediate(cfg: RunConfig, out: Path):
    an, extra = _fit(cfg, out)
    if not an.fit_y.converged:
        raise FloatingPointError("outcome model did not converge")
    seed = child_seed(cfg.seed, SINGLE_RUN_KEY, 1)
    draws, est = run_mediation(
        an.study, an.fit_m, an.fit_y, an.fb, J=cfg.J, seed=seed, n_inner=cfg.n_inner, mediator_noise=cfg.mediator_noise
    )
    report.write_effects(out / "effects.csv", est)
    report.write_draws(out / "draws.csv", draws)
    extra["mediation_seed_key"] = f"({cfg.seed}, {SINGLE_RUN_KEY}, 1)"
    report.write_text(out / "run_meta.txt", report.run_meta(cfg, extra))
    print(f"{'estimand':<9}{'point':>10}{'se':>10}{'ci_low':>10}{'ci_high':>10}")
    for name, pt, se, lo, hi in est.rows():
        print(f"{name:<9}{pt:10.4f}{se:10.4f}{lo:10.4f}{hi:10.4f}")


def cmd_benchmark(cfg: RunConfig, out: Path):
    def progress(res):
        log.info("replication %d %s", res.r, "ok" if res.ok else "failed")

    try:
        result = run_benchmark(cfg, progress=progress)
    except FailureBudgetExceeded as exc:
        out.mkdir(parents=True, exist_ok=True)
        report.write_text(
            out / "failures.txt",
            "".join(f"r={rep.r}: {rep.error}\n" for rep in exc.failures),
        )
        raise
    report.emit_outputs(result, out)
    if result.metrics is not None:
        print(result.metrics.display())


COMMANDS = {
    "simulate": cmd_simulate,
    "oracle": cmd_oracle,
    "fit": cmd_fit,
    "mediate": cmd_mediate,
    "benchmark": cmd_benchmark,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fcma", description=__doc__)
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", help="run configuration file (key = value)")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("--jobs", type=int, help="worker processes for benchmark replications")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        cfg = load_config(args.config) if args.config else RunConfig(mode=args.mode)
        cfg = cfg.replace(mode=args.mode, seed=args.seed, out=args.out, jobs=args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TypeError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        with np.errstate(over="ignore", under="ignore"):
            COMMANDS[cfg.mode](cfg, out)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FailureBudgetExceeded as exc:
        print(f"numerical failure budget exceeded: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
