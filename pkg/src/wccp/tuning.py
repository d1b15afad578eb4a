"""Regularization-level rule, cross-validation over its constant, and error metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import model
from .initialization import InitConfig, spectral_init
from .model import MeasurementSet
from .penalties import PenaltySpec
from .solver import SolverConfig, solve


@dataclass(frozen=True)
class TuningConfig:
    c_grid: tuple[float, ...] = (0.1, 0.5, 1.0, 2.0, 5.0)
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        grid = tuple(float(c) for c in self.c_grid)
        object.__setattr__(self, "c_grid", grid)
        if not grid or any(c <= 0 for c in grid):
            raise ValueError("c_grid must be a nonempty list of positive values")
        if list(grid) != sorted(grid):
            raise ValueError("c_grid must be sorted ascending")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")


def lambda_rule(data: MeasurementSet, beta, c: float) -> float:
    """``sqrt(c ln(d) / n^2 * sum_i r_i^2) * ||beta||`` with ``r`` the residuals at ``beta``."""
    if data.dim < 2:
        raise ValueError("lambda rule needs d >= 2 (ln d > 0)")
    if not c > 0:
        raise ValueError("c must be positive")
    r = model.residuals(data, beta)
    n = data.count
    return math.sqrt(c * math.log(data.dim) / n**2 * float(r @ r)) * float(np.linalg.norm(beta))


def fold_assignment(n: int, folds: int, seed: int) -> np.ndarray:
    """Balanced random fold labels for ``n`` samples."""
    if n < folds:
        raise ValueError(f"need at least {folds} samples for {folds}-fold CV, got {n}")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % folds
    rng.shuffle(labels)
    return labels


def _fit(train: MeasurementSet, spec_template: PenaltySpec, config: SolverConfig, c: float, init_cfg: InitConfig):
    beta0 = spectral_init(train, init_cfg)
    lam = lambda_rule(train, beta0, c)
    if not lam > 0:
        # a perfect or empty start gives lam = 0; any tiny level keeps the penalty valid
        lam = np.finfo(float).tiny
    return solve(train, spec_template.with_lambda(lam), config, beta0), lam


def cv_scores(
    data: MeasurementSet,
    spec_template: PenaltySpec,
    config: SolverConfig,
    tuning: TuningConfig,
    init_cfg: InitConfig | None = None,
    labels=None,
) -> np.ndarray:
    """Mean held-out loss for every ``c`` in the grid."""
    init_cfg = init_cfg or InitConfig(rng_seed=tuning.seed)
    if labels is None:
        labels = fold_assignment(data.count, tuning.folds, tuning.seed)
    labels = np.asarray(labels)
    scores = np.zeros(len(tuning.c_grid))
    for f in range(tuning.folds):
        val = labels == f
        if not np.any(val) or np.all(val):
            raise ValueError(f"fold {f} leaves an empty training or validation set")
        train, held = data.subset(np.flatnonzero(~val)), data.subset(np.flatnonzero(val))
        for ic, c in enumerate(tuning.c_grid):
            res, _ = _fit(train, spec_template, config, c, init_cfg)
            scores[ic] += model.loss(held, res.beta_hat)
    return scores / tuning.folds


def tune_lambda(
    data: MeasurementSet,
    spec_template: PenaltySpec,
    config: SolverConfig,
    tuning: TuningConfig,
    init_cfg: InitConfig | None = None,
) -> tuple[float, float]:
    """Pick ``c`` by K-fold CV and return ``(c_best, lambda_best)``.

    Each fit freezes ``lambda`` from the rule at its own spectral start.  Ties
    go to the smaller ``c``.  ``lambda_best`` is the rule on the full data at
    the full-data spectral start.
    """
    init_cfg = init_cfg or InitConfig(rng_seed=tuning.seed)
    if len(tuning.c_grid) == 1:
        c_best = tuning.c_grid[0]
    else:
        scores = cv_scores(data, spec_template, config, tuning, init_cfg)
        c_best = tuning.c_grid[int(np.argmin(scores))]  # argmin returns the first minimum
    beta0 = spectral_init(data, init_cfg)
    return c_best, lambda_rule(data, beta0, c_best)


def relative_error(beta_hat, beta_star) -> float:
    """``min(||b - b*||, ||b + b*||) / ||b*||``."""
    beta_hat = np.asarray(beta_hat, dtype=float)
    beta_star = np.asarray(beta_star, dtype=float)
    ref = float(np.linalg.norm(beta_star))
    if ref == 0:
        raise ValueError("relative error undefined for a zero reference signal")
    return min(float(np.linalg.norm(beta_hat - beta_star)), float(np.linalg.norm(beta_hat + beta_star))) / ref


def support_metrics(beta_hat, beta_star, threshold: float):
    """Precision, recall and exact match of ``{j : |b_j| > threshold}`` against ``supp(b*)``.

    An empty estimated support has precision 1 by convention.
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    est = set(np.flatnonzero(np.abs(np.asarray(beta_hat)) > threshold).tolist())
    true = set(np.flatnonzero(np.asarray(beta_star) != 0).tolist())
    hit = len(est & true)
    precision = hit / len(est) if est else 1.0
    recall = hit / len(true) if true else 1.0
    return precision, recall, est == true
