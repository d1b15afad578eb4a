"""Synthetic recovery experiments: data generation, trial runner, CSV and summaries.

Every trial draws its data from a random stream keyed by
``(seed, ratio, trial)``, so trials are order independent and can run in
parallel without changing results.  All penalties in a cell see the same
data.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .initialization import InitConfig, spectral_init
from .model import MeasurementSet, standardize
from .penalties import DEFAULT_SHAPE, Family, PenaltySpec
from .solver import Algorithm, SolverConfig, default_algorithm, solve
from .tuning import TuningConfig, cv_scores, lambda_rule, relative_error, support_metrics

CSV_SCHEMA_VERSION = 1
CSV_COLUMNS = (
    "penalty",
    "ratio",
    "trial",
    "seed",
    "relerr",
    "success",
    "iterations",
    "support_precision",
    "support_recall",
    "support_exact",
    "wall_seconds",
)

# ratios are keyed into the random stream at this resolution
_RATIO_KEY = 10**6
_SIGNAL_STREAM = 1
_DESIGN_STREAM = 2


class Design(str, enum.Enum):
    GAUSSIAN_SYMMETRIC = "gaussian"
    RANK_ONE_GAUSSIAN = "rank1"


@dataclass(frozen=True)
class PenaltyTemplate:
    """A penalty family and shape; the level is set per trial."""

    family: Family
    shape: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.shape is None:
            object.__setattr__(self, "shape", DEFAULT_SHAPE[self.family])

    @classmethod
    def parse(cls, text: str) -> "PenaltyTemplate":
        """Parse ``"scad"`` or ``"scad:3.7"``."""
        name, _, shape = text.strip().partition(":")
        return cls(Family(name.lower()), float(shape) if shape else None)

    @property
    def name(self) -> str:
        return self.family.value

    def spec(self, lam: float) -> PenaltySpec:
        return PenaltySpec(self.family, lam, self.shape)


def success_threshold_for(sigma: float) -> float:
    """Relative-error threshold counting a trial as a success (1e-3 up to sigma=0.01, else 1e-2)."""
    return 1e-3 if sigma <= 0.01 else 1e-2


@dataclass(frozen=True)
class ExperimentConfig:
    d: int = 128
    s: int = 10
    sigma: float = 0.01
    ratios: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
    trials: int = 100
    penalties: tuple[PenaltyTemplate, ...] = (PenaltyTemplate(Family.SCAD), PenaltyTemplate(Family.MCP))
    seed: int = 7
    design: Design = Design.GAUSSIAN_SYMMETRIC
    # "cv": pick c on trial 0 of each cell by K-fold CV; "fixed": use fixed_c
    lambda_mode: str = "cv"
    fixed_c: float = 1e-4
    c_grid: tuple[float, ...] = (1e-5, 1e-4, 1e-3, 1e-2, 1e-1)
    folds: int = 5
    algorithm: Algorithm | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    init_support: int | None = None
    standardize: bool = False
    fixed_signal: bool = False
    success_threshold: float | None = None
    record_timing: bool = True
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "design", Design(self.design))
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        object.__setattr__(self, "c_grid", tuple(float(c) for c in self.c_grid))
        pens = tuple(p if isinstance(p, PenaltyTemplate) else PenaltyTemplate.parse(p) for p in self.penalties)
        object.__setattr__(self, "penalties", pens)
        if self.algorithm is not None:
            object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if not 1 <= self.s <= self.d:
            raise ValueError(f"need 1 <= s <= d, got s={self.s}, d={self.d}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.ratios or any(not 0 < r <= 1 for r in self.ratios):
            raise ValueError("ratios must lie in (0, 1]")
        if list(self.ratios) != sorted(self.ratios):
            raise ValueError("ratios must be sorted ascending")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.lambda_mode not in ("cv", "fixed"):
            raise ValueError(f"lambda_mode must be 'cv' or 'fixed', got {self.lambda_mode!r}")
        if not self.penalties:
            raise ValueError("at least one penalty is required")

    @property
    def threshold(self) -> float:
        if self.success_threshold is not None:
            return self.success_threshold
        return success_threshold_for(self.sigma)

    def sample_size(self, ratio: float) -> int:
        return max(1, round(ratio * self.d))


@dataclass
class TrialRecord:
    penalty: str
    ratio: float
    trial: int
    seed: int
    relerr: float
    success: bool
    iterations: int
    support_precision: float
    support_recall: float
    support_exact: bool
    wall_seconds: float
    termination: str = ""
    lam: float = float("nan")

    def row(self) -> list:
        return [getattr(self, c) for c in CSV_COLUMNS]


def _stream(cfg: ExperimentConfig, ratio: float, trial: int, kind: int) -> np.random.Generator:
    ratio_key = int(round(ratio * _RATIO_KEY))
    if kind == _SIGNAL_STREAM and cfg.fixed_signal:
        key = [cfg.seed, ratio_key, kind]
    else:
        key = [cfg.seed, ratio_key, trial, kind]
    return np.random.default_rng(np.random.SeedSequence(key))


def trial_seed(cfg: ExperimentConfig, ratio: float, trial: int) -> int:
    """Stable 32-bit id of a trial's stream, reported in the CSV."""
    ss = np.random.SeedSequence([cfg.seed, int(round(ratio * _RATIO_KEY)), trial])
    return int(ss.generate_state(1)[0])


def generate_synthetic(cfg: ExperimentConfig, ratio: float, trial: int) -> tuple[MeasurementSet, np.ndarray]:
    """Draw ``(data, beta_star)`` for one trial.

    The signal has a uniformly random support of size ``s`` with standard
    normal entries; the design is symmetrized Gaussian ``(G + G')/2`` or
    rank-one Gaussian; responses carry ``sigma * N(0, 1)`` noise.
    """
    n = cfg.sample_size(ratio)
    if n < 1:  # pragma: no cover - sample_size clamps
        raise ValueError("sample size must be >= 1")
    rs = _stream(cfg, ratio, trial, _SIGNAL_STREAM)
    beta = np.zeros(cfg.d)
    supp = rs.choice(cfg.d, size=cfg.s, replace=False)
    vals = rs.standard_normal(cfg.s)
    # a zero draw would shrink the support; it has probability zero but keep nnz exact
    vals[vals == 0] = 1.0
    beta[supp] = vals

    rd = _stream(cfg, ratio, trial, _DESIGN_STREAM)
    if cfg.design is Design.GAUSSIAN_SYMMETRIC:
        G = rd.standard_normal((n, cfg.d, cfg.d))
        Z = 0.5 * (G + G.transpose(0, 2, 1))
        clean = np.einsum("j,ijk,k->i", beta, Z, beta)
        y = clean + cfg.sigma * rd.standard_normal(n)
        data = MeasurementSet.from_dense(Z, y)
    else:
        F = rd.standard_normal((n, cfg.d))
        y = (F @ beta) ** 2 + cfg.sigma * rd.standard_normal(n)
        data = MeasurementSet.from_factors(F, y)
    return data, beta


def support_threshold(beta) -> float:
    """Support cutoff ``1e-6 * max(1, ||beta||_inf)``."""
    return 1e-6 * max(1.0, float(np.max(np.abs(beta))))


def _algorithm_for(cfg: ExperimentConfig, spec: PenaltySpec) -> Algorithm:
    return cfg.algorithm if cfg.algorithm is not None else default_algorithm(spec)


def _init_for(cfg: ExperimentConfig, ratio: float, trial: int) -> InitConfig:
    return InitConfig(support_size_hint=cfg.init_support, rng_seed=trial_seed(cfg, ratio, trial))


def _prepare(cfg: ExperimentConfig, ratio: float, trial: int):
    data, beta_star = generate_synthetic(cfg, ratio, trial)
    scale = 1.0
    if cfg.standardize:
        data, report = standardize(data)
        scale = math.sqrt(report.operator_scale)
    return data, beta_star, scale


def select_c(cfg: ExperimentConfig, template: PenaltyTemplate, ratio: float) -> float:
    """Constant of the lambda rule for one (penalty, ratio) cell."""
    if cfg.lambda_mode == "fixed" or len(cfg.c_grid) == 1:
        return cfg.fixed_c if cfg.lambda_mode == "fixed" else cfg.c_grid[0]
    data, _, _ = _prepare(cfg, ratio, 0)
    folds = min(cfg.folds, data.count)
    if folds < 2:
        return cfg.c_grid[0]
    probe = template.spec(1.0)
    solver = replace(cfg.solver, algorithm=_algorithm_for(cfg, probe))
    tuning = TuningConfig(c_grid=cfg.c_grid, folds=folds, seed=trial_seed(cfg, ratio, 0))
    scores = cv_scores(data, probe, solver, tuning, _init_for(cfg, ratio, 0))
    return cfg.c_grid[int(np.argmin(scores))]


def run_trial(cfg: ExperimentConfig, ratio: float, trial: int, c_by_penalty: dict) -> list[TrialRecord]:
    """Run every penalty on one generated instance."""
    data, beta_star, scale = _prepare(cfg, ratio, trial)
    seed = trial_seed(cfg, ratio, trial)
    out = []
    for template in cfg.penalties:
        t0 = time.perf_counter()
        beta0 = spectral_init(data, _init_for(cfg, ratio, trial))
        lam = lambda_rule(data, beta0, c_by_penalty[template]) if data.dim >= 2 else 0.0
        # a zero start makes the rule vanish; keep the level strictly positive
        lam = max(lam, np.finfo(float).tiny)
        spec = template.spec(lam)
        solver = replace(cfg.solver, algorithm=_algorithm_for(cfg, spec))
        try:
            res = solve(data, spec, solver, beta0)
            beta_hat = res.beta_hat * scale
            iters, term = res.iterations, res.termination.value
        except (ArithmeticError, ValueError) as exc:  # recorded, never fatal to the batch
            beta_hat, iters, term = np.zeros(cfg.d), 0, f"error: {exc}"
        err = relative_error(beta_hat, beta_star)
        if not math.isfinite(err):
            err = float("inf")
        prec, rec, exact = support_metrics(beta_hat, beta_star, support_threshold(beta_hat))
        wall = time.perf_counter() - t0 if cfg.record_timing else 0.0
        out.append(
            TrialRecord(
                penalty=template.name,
                ratio=ratio,
                trial=trial,
                seed=seed,
                relerr=err,
                success=bool(err < cfg.threshold),
                iterations=iters,
                support_precision=prec,
                support_recall=rec,
                support_exact=bool(exact),
                wall_seconds=wall,
                termination=term,
                lam=lam,
            )
        )
    return out


def _run_trial_task(args):
    return run_trial(*args)


def _select_c_task(args):
    return select_c(*args)


def run_experiment(cfg: ExperimentConfig, progress=None) -> list[TrialRecord]:
    """All (penalty, ratio, trial) records, sorted by that key."""
    cells = [(cfg, t, r) for r in cfg.ratios for t in cfg.penalties]
    if cfg.n_jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.n_jobs) as pool:
            cs = list(pool.map(_select_c_task, cells))
            c_map = {}
            for (_, t, r), c in zip(cells, cs):
                c_map.setdefault(r, {})[t] = c
            tasks = [(cfg, r, k, c_map[r]) for r in cfg.ratios for k in range(cfg.trials)]
            batches = pool.map(_run_trial_task, tasks)
            records = [rec for batch in batches for rec in batch]
    else:
        records = []
        for r in cfg.ratios:
            c_map = {t: select_c(cfg, t, r) for t in cfg.penalties}
            for k in range(cfg.trials):
                batch = run_trial(cfg, r, k, c_map)
                records.extend(batch)
                if progress is not None:
                    progress(batch)
    order = {t.name: i for i, t in enumerate(cfg.penalties)}
    records.sort(key=lambda rec: (order[rec.penalty], rec.ratio, rec.trial))
    return records


# ------------------------------------------------------------------ persistence


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rec in records:
        w.writerow([_fmt(v) for v in rec.row()])
    return buf.getvalue()


def write_csv(records, path) -> None:
    Path(path).write_text(records_to_csv(records))


def read_csv(path) -> list[TrialRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV columns {reader.fieldnames}")
        out = []
        for row in reader:
            out.append(
                TrialRecord(
                    penalty=row["penalty"],
                    ratio=float(row["ratio"]),
                    trial=int(row["trial"]),
                    seed=int(row["seed"]),
                    relerr=float(row["relerr"]),
                    success=row["success"] == "1",
                    iterations=int(row["iterations"]),
                    support_precision=float(row["support_precision"]),
                    support_recall=float(row["support_recall"]),
                    support_exact=row["support_exact"] == "1",
                    wall_seconds=float(row["wall_seconds"]),
                )
            )
    return out


# ------------------------------------------------------------------- summaries


@dataclass
class CellSummary:
    penalty: str
    ratio: float
    trials: int
    success_rate: float
    mse_relerr: float | None
    sd_relerr: float | None
    mean_iterations: float


def summarize(records) -> list[CellSummary]:
    """Per (penalty, ratio): success rate, mean/SD of squared relative error over successes."""
    records = list(records)
    if not records:
        raise ValueError("no records to summarize")
    cells: dict = {}
    for rec in records:
        cells.setdefault((rec.penalty, rec.ratio), []).append(rec)
    out = []
    for (pen, ratio), recs in cells.items():
        sq = np.array([r.relerr**2 for r in recs if r.success])
        out.append(
            CellSummary(
                penalty=pen,
                ratio=ratio,
                trials=len(recs),
                success_rate=sum(r.success for r in recs) / len(recs),
                mse_relerr=float(sq.mean()) if sq.size else None,
                sd_relerr=float(sq.std()) if sq.size else None,
                mean_iterations=float(np.mean([r.iterations for r in recs])),
            )
        )
    return out


def summary_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = [f.name for f in fields(CellSummary)]
    w.writerow(names)
    for row in rows:
        w.writerow(["" if v is None else _fmt(v) for v in asdict(row).values()])
    return buf.getvalue()


def plot_success_curve(rows, path) -> None:
    """Success rate against n/d, one line per penalty, written as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    by_pen: dict = {}
    for row in rows:
        by_pen.setdefault(row.penalty, []).append((row.ratio, row.success_rate))
    for pen, pts in by_pen.items():
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=pen.upper())
    ax.set_xlabel("n/d")
    ax.set_ylabel("success rate")
    ax.set_ylim(-0.02, 1.02)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


__all__ = [
    "CSV_COLUMNS",
    "CSV_SCHEMA_VERSION",
    "CellSummary",
    "Design",
    "ExperimentConfig",
    "PenaltyTemplate",
    "TrialRecord",
    "generate_synthetic",
    "plot_success_curve",
    "read_csv",
    "records_to_csv",
    "run_experiment",
    "run_trial",
    "select_c",
    "summarize",
    "success_threshold_for",
    "support_threshold",
    "write_csv",
]
