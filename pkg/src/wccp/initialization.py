"""Sparse spectral starting point for the solvers."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .model import MeasurementSet, apply_operators


@dataclass(frozen=True)
class InitConfig:
    """``support_size_hint`` defaults to ``ceil(sqrt(n))`` when ``None``."""

    support_size_hint: int | None = None
    power_iters: int = 100
    rng_seed: int = 0
    angle_tol: float = 1e-8

    def __post_init__(self):
        if self.support_size_hint is not None and self.support_size_hint < 1:
            raise ValueError("support_size_hint must be positive")
        if self.power_iters < 1:
            raise ValueError("power_iters must be >= 1")


def weighted_sum(data: MeasurementSet, weights=None) -> np.ndarray:
    """``(1/n) sum_i w_i Z_i`` with ``w = y`` by default."""
    w = data.y if weights is None else np.asarray(weights, dtype=float)
    if data.is_rank_one:
        F = data.factors
        return (F.T * w) @ F / data.count
    return np.tensordot(w, data.dense, axes=1) / data.count


def coordinate_scores(data: MeasurementSet) -> np.ndarray:
    """Marginal scores ``|diag(D)|``; for rank-one data ``|sum_i y_i z_ij^2| / n``."""
    if data.is_rank_one:
        return np.abs(data.y @ data.factors**2) / data.count
    return np.abs(np.einsum("i,ijj->j", data.y, data.dense)) / data.count


def power_iteration(M: np.ndarray, iters: int, rng: np.random.Generator, angle_tol: float = 1e-8):
    """Dominant eigenvector of the symmetric matrix ``M`` by normalized power steps."""
    v = rng.standard_normal(M.shape[0])
    v /= np.linalg.norm(v)
    for _ in range(iters):
        w = M @ v
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return v
        w /= nrm
        # sign-insensitive angle between successive directions
        cos = min(1.0, abs(float(w @ v)))
        v = w if w @ v >= 0 else -w
        if math.acos(cos) < angle_tol:
            break
    return v


def optimal_scale(data: MeasurementSet, v) -> float:
    """``t >= 0`` minimizing ``sum_i (t^2 v'Z_i v - y_i)^2``."""
    _, q = apply_operators(data, v)
    qq = float(q @ q)
    if qq == 0:
        return 0.0
    return math.sqrt(max(0.0, float(q @ data.y) / qq))


def spectral_init(data: MeasurementSet, cfg: InitConfig | None = None) -> np.ndarray:
    """Sparse spectral estimate ``t * v``.

    Keeps the ``s_hat`` coordinates with the largest ``|diag(D)|`` for
    ``D = (1/n) sum_i y_i Z_i``, takes the top eigenvector of ``D`` on them
    by power iteration (shifted when the dominant eigenvalue is negative),
    and scales it to best fit the responses.
    """
    cfg = cfg or InitConfig()
    d = data.dim
    s_hat = cfg.support_size_hint or math.ceil(math.sqrt(data.count))
    s_hat = min(int(s_hat), d)

    scores = coordinate_scores(data)
    # stable sort keeps ties deterministic (lowest index first)
    keep = np.sort(np.argsort(-scores, kind="stable")[:s_hat])
    if data.is_rank_one:
        F = data.factors[:, keep]
        D = (F.T * data.y) @ F / data.count
    else:
        D = np.tensordot(data.y, data.dense[:, keep][:, :, keep], axes=1) / data.count

    if not np.any(D):
        warnings.warn("spectral matrix is zero; starting from the origin", stacklevel=2)
        return np.zeros(d)

    rng = np.random.default_rng(cfg.rng_seed)
    v_sub = power_iteration(D, cfg.power_iters, rng, cfg.angle_tol)
    rq = float(v_sub @ D @ v_sub)
    if rq < 0:
        # dominant eigenvalue is negative; shifting by it makes the top
        # algebraic eigenvalue dominant
        v_sub = power_iteration(D - rq * np.eye(len(keep)), cfg.power_iters, rng, cfg.angle_tol)
    v = np.zeros(d)
    v[keep] = v_sub
    return optimal_scale(data, v) * v
