"""Proximal-gradient and iteratively reweighted l1 solvers with Armijo steps.

Both algorithms minimize ``F(beta) = L(beta) + sum_j p_lam(|beta_j|)`` from
a given start.  Each iteration caches the gradient at ``beta^k`` and
backtracks only the proposal, accepting the first step
``tau = gamma1 * gamma0**j`` with

    F(beta^k) - F(beta^{k+1}) >= delta * ||beta^{k+1} - beta^k||^2.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import model
from .model import MeasurementSet
from .penalties import (
    Family,
    PenaltySpec,
    UnsupportedPenaltyError,
    penalty_curvature_lower,
    penalty_mu,
    penalty_total,
    prox,
    soft_threshold,
    weight_vector,
)

# largest tau*mu admitted when calling a prox during backtracking
PROX_SAFETY = 0.999


class Algorithm(str, enum.Enum):
    PGA = "pga"
    IRL1 = "irl1"


class Termination(str, enum.Enum):
    TOLERANCE_MET = "ToleranceMet"
    ITER_CAP = "IterCap"
    BACKTRACK_FAIL = "BacktrackFail"


class BacktrackFailure(RuntimeError):
    """No admissible step within ``max_backtracks`` halvings."""


class NotApplicableError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    algorithm: Algorithm = Algorithm.PGA
    max_iters: int = 5000
    tol: float = 1e-6
    eps1: float = 1e-8
    delta: float = 1e-4
    gamma0: float = 0.5
    gamma1: float = 1.0
    max_backtracks: int = 60

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if self.max_iters < 1 or self.max_backtracks < 1:
            raise ValueError("max_iters and max_backtracks must be positive")
        if not (self.tol > 0 and self.eps1 > 0 and self.delta > 0):
            raise ValueError("tol, eps1 and delta must be positive")
        if not 0 < self.gamma0 < 1:
            raise ValueError(f"gamma0 must lie in (0, 1), got {self.gamma0}")
        if not 0 < self.gamma1 <= 1:
            raise ValueError(f"gamma1 must lie in (0, 1], got {self.gamma1}")


@dataclass
class SolverResult:
    beta_hat: np.ndarray
    objective_trace: np.ndarray
    step_trace: np.ndarray
    iterations: int
    termination: Termination
    fp_residual: float
    move_trace: np.ndarray = field(default_factory=lambda: np.empty(0))
    backtracks: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    @property
    def converged(self) -> bool:
        return self.termination is Termination.TOLERANCE_MET

    @property
    def final_step(self) -> float:
        return float(self.step_trace[-1]) if len(self.step_trace) else 1.0

    def to_dict(self) -> dict:
        return {
            "beta": self.beta_hat.tolist(),
            "objective_trace": self.objective_trace.tolist(),
            "step_trace": self.step_trace.tolist(),
            "iterations": self.iterations,
            "termination": self.termination.value,
            "fp_residual": self.fp_residual,
        }


class _Point:
    """Iterate with cached loss pieces, so accepted candidates reuse their work."""

    __slots__ = ("beta", "A", "r", "F", "_grad", "_data")

    def __init__(self, data: MeasurementSet, spec: PenaltySpec, beta):
        self._data = data
        self.beta = np.asarray(beta, dtype=float)
        self.A, q = model.apply_operators(data, self.beta)
        self.r = q - data.y
        self.F = float(self.r @ self.r) / (4 * data.count) + penalty_total(spec, self.beta)
        self._grad = None

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = model.gradient_from(self._data, self.A, self.r)
        return self._grad


def objective(data: MeasurementSet, spec: PenaltySpec, beta) -> float:
    """Penalized objective ``L(beta) + P(beta)``."""
    return model.loss(data, beta) + penalty_total(spec, beta)


def armijo_step(
    data: MeasurementSet,
    spec: PenaltySpec,
    config: SolverConfig,
    beta_k,
    proposal: Callable[[float], np.ndarray],
    *,
    current: _Point | None = None,
    mu: float = 0.0,
):
    """Backtrack ``tau = gamma1 * gamma0**j`` until the sufficient-decrease test holds.

    Parameters
    ----------
    proposal : callable
        Maps a step ``tau`` to the candidate iterate.
    mu : float
        Weak-convexity modulus of the penalty; steps with ``tau * mu`` at or
        above ``PROX_SAFETY`` are skipped without calling ``proposal``.

    Returns
    -------
    tau, beta_next, j
        The accepted step, the candidate, and the number of reductions.

    Raises
    ------
    BacktrackFailure
        If no ``j <= max_backtracks`` is admissible.
    """
    cur = current if current is not None else _Point(data, spec, beta_k)
    _, beta_next, j, _ = _armijo(data, spec, config, cur, proposal, mu)
    return config.gamma1 * config.gamma0**j, beta_next.beta, j


def _armijo(data, spec, config, cur, proposal, mu):
    tau = config.gamma1
    for j in range(config.max_backtracks + 1):
        if tau * mu < PROX_SAFETY:
            cand = _Point(data, spec, proposal(tau))
            diff = cand.beta - cur.beta
            move2 = float(diff @ diff)
            if cur.F - cand.F >= config.delta * move2:
                return tau, cand, j, move2
        tau *= config.gamma0
    raise BacktrackFailure(f"no admissible step after {config.max_backtracks} reductions")


def _pga_proposal(spec, cur):
    def propose(tau):
        return prox(spec, cur.beta - tau * cur.grad, tau)

    return propose


def _irl1_proposal(spec, cur, eps1):
    w = weight_vector(spec, cur.beta, eps1)

    def propose(tau):
        return soft_threshold(cur.beta - tau * cur.grad, tau * w)

    return propose


def _run(data, spec, config, beta0, algorithm: Algorithm) -> SolverResult:
    beta0 = np.array(beta0, dtype=float)
    if beta0.shape != (data.dim,):
        raise model.DimensionError(f"beta0 must have shape ({data.dim},), got {beta0.shape}")
    if algorithm is Algorithm.PGA:
        if not spec.has_prox:
            raise UnsupportedPenaltyError(f"{spec.name} has no closed-form prox; use algorithm='irl1'")
        mu = penalty_mu(spec) if spec.family is not Family.LHALF else 0.0
    else:
        if spec.family is Family.LHALF:
            raise UnsupportedPenaltyError("lhalf cannot be reweighted; use algorithm='pga'")
        mu = 0.0

    cur = _Point(data, spec, beta0)
    objs, steps, moves, bts = [cur.F], [], [], []
    termination = Termination.ITER_CAP
    for _ in range(config.max_iters):
        if algorithm is Algorithm.PGA:
            propose = _pga_proposal(spec, cur)
        else:
            propose = _irl1_proposal(spec, cur, config.eps1)
        try:
            tau, nxt, j, move2 = _armijo(data, spec, config, cur, propose, mu)
        except BacktrackFailure:
            termination = Termination.BACKTRACK_FAIL
            break
        move = float(np.sqrt(move2))
        scale = max(1.0, float(np.linalg.norm(cur.beta)))
        objs.append(nxt.F)
        steps.append(tau)
        moves.append(move)
        bts.append(j)
        cur = nxt
        if move < config.tol * scale:
            termination = Termination.TOLERANCE_MET
            break

    tau_final = steps[-1] if steps else config.gamma1
    form = "prox" if algorithm is Algorithm.PGA else "weighted"
    if form == "prox" and tau_final * mu >= 1:
        tau_final = PROX_SAFETY / mu
    fp = fixed_point_residual(data, spec, cur.beta, tau_final, form=form, eps1=config.eps1)
    return SolverResult(
        beta_hat=cur.beta,
        objective_trace=np.asarray(objs),
        step_trace=np.asarray(steps),
        iterations=len(steps),
        termination=termination,
        fp_residual=fp,
        move_trace=np.asarray(moves),
        backtracks=np.asarray(bts, dtype=int),
    )


def solve_pga(data: MeasurementSet, spec: PenaltySpec, config: SolverConfig, beta0) -> SolverResult:
    """Proximal gradient with exact prox and Armijo steps."""
    return _run(data, spec, config, beta0, Algorithm.PGA)


def solve_irl1(data: MeasurementSet, spec: PenaltySpec, config: SolverConfig, beta0) -> SolverResult:
    """Iteratively reweighted l1: weighted soft threshold with slopes from the current iterate."""
    return _run(data, spec, config, beta0, Algorithm.IRL1)


def solve(data: MeasurementSet, spec: PenaltySpec, config: SolverConfig, beta0) -> SolverResult:
    return _run(data, spec, config, beta0, config.algorithm)


def default_algorithm(spec: PenaltySpec) -> Algorithm:
    """IRL1 for EXP (no closed-form prox), PGA for everything else."""
    return Algorithm.IRL1 if spec.family is Family.EXP else Algorithm.PGA


def fixed_point_residual(
    data: MeasurementSet,
    spec: PenaltySpec,
    beta,
    tau: float,
    *,
    form: str = "auto",
    eps1: float = 1e-8,
) -> float:
    """Distance of ``beta`` from its own proximal-gradient (or reweighted) update.

    ``form="prox"`` uses ``prox_{tau P}(beta - tau grad L)``; ``form="weighted"``
    uses the weighted soft threshold with weights taken at ``beta``.
    ``"auto"`` picks the prox form whenever the family has one.
    """
    beta = np.asarray(beta, dtype=float)
    g = model.gradient(data, beta)
    if form == "auto":
        form = "prox" if spec.has_prox else "weighted"
    if form == "prox":
        target = prox(spec, beta - tau * g, tau)
    elif form == "weighted":
        target = soft_threshold(beta - tau * g, tau * weight_vector(spec, beta, eps1))
    else:
        raise ValueError(f"unknown residual form {form!r}")
    return float(np.linalg.norm(beta - target))


def support_of(beta, threshold: float | None = None) -> np.ndarray:
    """Indices with ``|beta_j|`` above ``threshold`` (default ``1e-6 * max(1, ||beta||_inf)``)."""
    beta = np.asarray(beta, dtype=float)
    if threshold is None:
        threshold = 1e-6 * max(1.0, float(np.max(np.abs(beta), initial=0.0)))
    return np.flatnonzero(np.abs(beta) > threshold)


def oracle_solve(
    data: MeasurementSet,
    spec: PenaltySpec,
    config: SolverConfig,
    support,
    beta0=None,
    *,
    seed: int = 0,
) -> SolverResult:
    """Solve the penalized problem restricted to ``support`` and embed the result.

    ``beta0`` may be a full-length start (it is restricted) or ``None``, in
    which case a spectral start is computed on the restricted data.
    """
    from .initialization import InitConfig, spectral_init

    idx = np.asarray(sorted(set(int(i) for i in support)), dtype=int)
    if idx.size == 0:
        raise ValueError("oracle support must be nonempty")
    if idx[0] < 0 or idx[-1] >= data.dim:
        raise IndexError("support index out of range")
    sub = data.restrict(idx)
    if beta0 is None:
        start = spectral_init(sub, InitConfig(support_size_hint=idx.size, rng_seed=seed))
    else:
        start = np.asarray(beta0, dtype=float)[idx]
    res = _run(sub, spec, config, start, config.algorithm)
    full = np.zeros(data.dim)
    full[idx] = res.beta_hat
    res.beta_hat = full
    return res


def local_min_check(
    data: MeasurementSet,
    spec: PenaltySpec,
    beta,
    threshold: float | None = None,
    support=None,
):
    """Second-order certificate on the support of ``beta``.

    Forms the loss Hessian restricted to the support plus, on its diagonal,
    the smallest one-sided curvature of the penalty at ``|beta_j|`` (never
    below ``-mu``).  Returns ``(certified, min_eigenvalue)``.  ``support``
    overrides the thresholded support of ``beta``.
    """
    beta = np.asarray(beta, dtype=float)
    if support is None:
        supp = support_of(beta, threshold)
    else:
        supp = np.asarray(sorted(set(int(i) for i in support)), dtype=int)
    if supp.size == 0:
        raise NotApplicableError("beta has empty support")
    H = model.hessian(data, beta, supp)
    curv = np.asarray(penalty_curvature_lower(spec, np.abs(beta[supp])), dtype=float)
    if spec.family is not Family.L1:
        curv = np.maximum(curv, -penalty_mu(spec))
    H[np.diag_indices_from(H)] += curv
    lo = float(np.linalg.eigvalsh(H)[0])
    return lo > 0, lo
