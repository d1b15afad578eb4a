"""Command-line entry point: ``wccp {solve,tune,experiment,summary,generate}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (
    Design,
    ExperimentConfig,
    PenaltyTemplate,
    generate_synthetic,
    plot_success_curve,
    read_csv,
    records_to_csv,
    summarize,
    summary_to_csv,
)
from .initialization import InitConfig, spectral_init
from .model import load_data, save_data, standardize
from .penalties import Family, PenaltySpec
from .solver import Algorithm, SolverConfig, default_algorithm, solve
from .tuning import TuningConfig, tune_lambda

log = logging.getLogger("wccp")

PENALTY_CHOICES = [f.value for f in Family]


def parse_ratios(text: str) -> tuple[float, ...]:
    """``"0.1,0.5,1"`` or an inclusive range ``"0.1:1.0:0.1"``."""
    if ":" in text:
        start, stop, step = (float(x) for x in text.split(":"))
        count = int(round((stop - start) / step)) + 1
        return tuple(round(start + i * step, 10) for i in range(count))
    return tuple(float(x) for x in text.split(",") if x.strip())


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _add_solver_args(p):
    d = SolverConfig()
    p.add_argument("--max-iters", type=int, default=d.max_iters)
    p.add_argument("--tol", type=float, default=d.tol)
    p.add_argument("--eps1", type=float, default=d.eps1)
    p.add_argument("--delta", type=float, default=d.delta)
    p.add_argument("--gamma0", type=float, default=d.gamma0)
    p.add_argument("--gamma1", type=float, default=d.gamma1)
    p.add_argument("--max-backtracks", type=int, default=d.max_backtracks)


def _solver_config(args, algorithm) -> SolverConfig:
    return SolverConfig(
        algorithm=algorithm,
        max_iters=args.max_iters,
        tol=args.tol,
        eps1=args.eps1,
        delta=args.delta,
        gamma0=args.gamma0,
        gamma1=args.gamma1,
        max_backtracks=args.max_backtracks,
    )


def _load(args):
    data = load_data(args.data)
    if args.standardize == "on":
        data, report = standardize(data)
        log.info("standardized: shift=%g scale=%g", report.response_shift, report.operator_scale)
    return data


def _start(args, data) -> np.ndarray:
    if args.init == "spectral":
        return spectral_init(data, InitConfig(support_size_hint=args.init_s, rng_seed=args.seed))
    if args.init == "zeros":
        return np.zeros(data.dim)
    if args.init.startswith("file:"):
        doc = json.loads(Path(args.init[5:]).read_text())
        # accepts a bare list or a previous solve output
        return np.asarray(doc["beta"] if isinstance(doc, dict) else doc, dtype=float)
    raise SystemExit(f"unknown --init {args.init!r}")


def cmd_solve(args) -> int:
    data = _load(args)
    spec = PenaltySpec.from_name(args.penalty, args.lam, args.shape)
    algorithm = Algorithm(args.algorithm) if args.algorithm != "auto" else default_algorithm(spec)
    beta0 = _start(args, data)
    res = solve(data, spec, _solver_config(args, algorithm), beta0)
    text = json.dumps(res.to_dict())
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    log.info("%s after %d iterations, fp residual %.3g", res.termination.value, res.iterations, res.fp_residual)
    return 0


def cmd_tune(args) -> int:
    data = _load(args)
    template = PenaltySpec.from_name(args.penalty, 1.0, args.shape)
    algorithm = Algorithm(args.algorithm) if args.algorithm != "auto" else default_algorithm(template)
    tuning = TuningConfig(c_grid=args.c_grid, folds=args.folds, seed=args.seed)
    c_best, lam = tune_lambda(
        data,
        template,
        _solver_config(args, algorithm),
        tuning,
        InitConfig(support_size_hint=args.init_s, rng_seed=args.seed),
    )
    print(json.dumps({"c_best": c_best, "lambda_best": lam}))
    return 0


def cmd_experiment(args) -> int:
    algorithm = None if args.algorithm == "auto" else Algorithm(args.algorithm)
    cfg = ExperimentConfig(
        d=args.d,
        s=args.s,
        sigma=args.sigma,
        ratios=parse_ratios(args.ratios),
        trials=args.trials,
        penalties=tuple(PenaltyTemplate.parse(p) for p in args.penalties.split(",")),
        seed=args.seed,
        design=Design(args.design),
        lambda_mode=args.lambda_mode,
        fixed_c=args.c,
        c_grid=args.c_grid,
        folds=args.folds,
        algorithm=algorithm,
        solver=_solver_config(args, Algorithm.PGA),
        init_support=args.init_s,
        standardize=args.standardize == "on",
        fixed_signal=args.fixed_signal,
        success_threshold=args.success_threshold,
        record_timing=not args.no_timing,
        n_jobs=args.jobs,
    )
    from .experiments import run_experiment

    def progress(batch):
        for rec in batch:
            log.info("%s ratio=%g trial=%d relerr=%.3g", rec.penalty, rec.ratio, rec.trial, rec.relerr)

    records = run_experiment(cfg, progress=progress)
    text = records_to_csv(records)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_summary(args) -> int:
    rows = summarize(read_csv(args.results))
    text = summary_to_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.svg:
        plot_success_curve(rows, args.svg)
    return 0


def cmd_generate(args) -> int:
    cfg = ExperimentConfig(
        d=args.d, s=args.s, sigma=args.sigma, ratios=(args.ratio,), trials=1, seed=args.seed, design=Design(args.design)
    )
    data, beta_star = generate_synthetic(cfg, args.ratio, args.trial)
    save_data(data, args.out)
    if args.truth:
        Path(args.truth).write_text(json.dumps(beta_star.tolist()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wccp", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def data_args(p):
        p.add_argument("--data", required=True, help="JSON or binary measurement file")
        p.add_argument("--penalty", required=True, choices=PENALTY_CHOICES)
        p.add_argument("--shape", type=float, default=None, help="family shape constant (default per family)")
        p.add_argument("--algorithm", choices=["auto", "pga", "irl1"], default="auto")
        p.add_argument("--standardize", choices=["on", "off"], default="off")
        p.add_argument("--init-s", type=int, default=None, help="spectral support size (default ceil(sqrt(n)))")
        p.add_argument("--seed", type=int, default=0)
        _add_solver_args(p)

    p = sub.add_parser("solve", help="solve one penalized problem")
    data_args(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--init", default="spectral", help="spectral | zeros | file:<path>")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("tune", help="choose the lambda-rule constant by cross-validation")
    data_args(p)
    p.add_argument("--c-grid", type=_floats, default=TuningConfig().c_grid)
    p.add_argument("--folds", type=int, default=5)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("experiment", help="synthetic recovery experiment, CSV output")
    p.add_argument("--d", type=int, default=128)
    p.add_argument("--s", type=int, default=10)
    p.add_argument("--sigma", type=float, default=0.01)
    p.add_argument("--ratios", default="0.1:1.0:0.1")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--penalties", default="scad,mcp,l1", help="comma list, optional shape as name:value")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--design", choices=[d.value for d in Design], default="gaussian")
    p.add_argument("--lambda-mode", choices=["cv", "fixed"], default="cv")
    p.add_argument("--c", type=float, default=1e-4, help="lambda-rule constant for --lambda-mode fixed")
    p.add_argument("--c-grid", type=_floats, default=ExperimentConfig().c_grid)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--algorithm", choices=["auto", "pga", "irl1"], default="auto")
    p.add_argument("--init-s", type=int, default=None)
    p.add_argument("--standardize", choices=["on", "off"], default="off")
    p.add_argument("--fixed-signal", action="store_true", help="one signal per cell instead of per trial")
    p.add_argument("--success-threshold", type=float, default=None)
    p.add_argument("--no-timing", action="store_true", help="write wall_seconds as 0 for byte-stable output")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=None)
    _add_solver_args(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("summary", help="per-cell table from an experiment CSV")
    p.add_argument("results")
    p.add_argument("--out", default=None)
    p.add_argument("--svg", default=None, help="write a success-rate curve")
    p.set_defaults(func=cmd_summary)

    p = sub.add_parser("generate", help="write one synthetic instance to a data file")
    p.add_argument("--d", type=int, default=32)
    p.add_argument("--s", type=int, default=4)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--ratio", type=float, default=1.0)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--design", choices=[d.value for d in Design], default="gaussian")
    p.add_argument("--out", required=True)
    p.add_argument("--truth", default=None, help="also write the true signal as JSON")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
