"""Separable sparsity penalties, their slopes, curvature moduli and proximal maps.

Every penalty acts on ``t = |beta_j|`` and is scaled by a regularization
level ``lam``.  The weakly-convex-concave families (SCAD, MCP, Firm, LOG,
EXP) carry a weak-convexity modulus ``mu`` and a slope constant ``rho`` with
``p'(0+) = lam * rho``.  L1 and L_{1/2} are kept as baselines.

CLI names: ``l1``, ``lhalf``, ``scad``, ``mcp``, ``firm``, ``log``, ``exp``.
Default shapes: SCAD ``a=3.7``, MCP ``gamma=2``, Firm ``c=2``, LOG ``c=1``,
EXP ``c=1``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class Family(str, enum.Enum):
    SCAD = "scad"
    MCP = "mcp"
    FIRM = "firm"
    LOG = "log"
    EXP = "exp"
    L1 = "l1"
    LHALF = "lhalf"


WCCP_FAMILIES = (Family.SCAD, Family.MCP, Family.FIRM, Family.LOG, Family.EXP)

DEFAULT_SHAPE = {
    Family.SCAD: 3.7,
    Family.MCP: 2.0,
    Family.FIRM: 2.0,
    Family.LOG: 1.0,
    Family.EXP: 1.0,
    Family.L1: 1.0,
    Family.LHALF: 1.0,
}

# objective gap below which the LOG prox prefers the smaller root
_TIE_TOL = 1e-12


class PenaltyDomainError(ValueError):
    """Argument outside the domain of a penalty operation."""


class UnsupportedPenaltyError(ValueError):
    """Operation not defined for the requested penalty family."""


@dataclass(frozen=True)
class PenaltySpec:
    """A penalty family with its regularization level and shape constant.

    ``shape`` is ``a`` for SCAD, ``gamma`` for MCP and ``c`` for
    Firm/LOG/EXP; it is ignored by L1 and LHalf.
    """

    family: Family
    lam: float
    shape: float | None = None

    def __post_init__(self):
        family = Family(self.family)
        object.__setattr__(self, "family", family)
        shape = DEFAULT_SHAPE[family] if self.shape is None else float(self.shape)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "lam", float(self.lam))
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(f"lam must be positive and finite, got {self.lam}")
        if family is Family.SCAD and not shape > 2:
            raise ValueError(f"SCAD requires a > 2, got {shape}")
        if family in (Family.MCP, Family.FIRM, Family.LOG, Family.EXP) and not shape > 0:
            raise ValueError(f"{family.value} requires a positive shape, got {shape}")

    @classmethod
    def from_name(cls, name: str, lam: float, shape: float | None = None) -> "PenaltySpec":
        return cls(Family(name.lower()), lam, shape)

    def with_lambda(self, lam: float) -> "PenaltySpec":
        return PenaltySpec(self.family, lam, self.shape)

    @property
    def name(self) -> str:
        return self.family.value

    @property
    def is_wccp(self) -> bool:
        return self.family in WCCP_FAMILIES

    @property
    def has_prox(self) -> bool:
        return self.family is not Family.EXP


def _check_nonneg(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise PenaltyDomainError("penalty arguments must be nonnegative (pass |beta|)")
    return t


def _out(x, like):
    return float(np.asarray(x).item()) if np.ndim(like) == 0 else x


def penalty_value(spec: PenaltySpec, t):
    """Evaluate ``p_lam(t)`` for ``t >= 0`` (scalar or array)."""
    t = _check_nonneg(t)
    lam, k = spec.lam, spec.shape
    fam = spec.family
    if fam is Family.L1:
        v = lam * t
    elif fam is Family.LHALF:
        v = lam * np.sqrt(t)
    elif fam is Family.SCAD:
        v = np.where(
            t <= lam,
            lam * t,
            np.where(
                t <= k * lam,
                (2 * k * lam * t - t**2 - lam**2) / (2 * (k - 1)),
                lam**2 * (k + 1) / 2,
            ),
        )
    elif fam is Family.MCP:
        v = np.where(t <= k * lam, lam * t - t**2 / (2 * k), k * lam**2 / 2)
    elif fam is Family.FIRM:
        v = np.where(t < k, lam * t - lam * t**2 / (2 * k), k * lam / 2)
    elif fam is Family.LOG:
        v = lam * np.log1p(k * t)
    elif fam is Family.EXP:
        v = -lam * np.expm1(-k * t)
    else:  # pragma: no cover
        raise UnsupportedPenaltyError(fam)
    return _out(v, t)


def penalty_total(spec: PenaltySpec, beta) -> float:
    """Separable penalty ``sum_j p_lam(|beta_j|)``."""
    return float(np.sum(penalty_value(spec, np.abs(np.asarray(beta, dtype=float)))))


def penalty_derivative(spec: PenaltySpec, t):
    """Derivative ``p'_lam(t)`` for ``t > 0``; kinks take the left-piece value."""
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise PenaltyDomainError("derivative is defined for t > 0; use penalty_rho for 0+")
    return _out(_derivative(spec, t), t)


def _derivative(spec, t):
    lam, k = spec.lam, spec.shape
    fam = spec.family
    if fam is Family.L1:
        return np.full_like(t, lam)
    if fam is Family.LHALF:
        return lam / (2 * np.sqrt(t))
    if fam is Family.SCAD:
        return np.where(t <= lam, lam, np.maximum(k * lam - t, 0.0) / (k - 1))
    if fam is Family.MCP:
        return np.maximum(lam - t / k, 0.0)
    if fam is Family.FIRM:
        return np.where(t < k, lam - lam * t / k, 0.0)
    if fam is Family.LOG:
        return lam * k / (k * t + 1)
    if fam is Family.EXP:
        return lam * k * np.exp(-k * t)
    raise UnsupportedPenaltyError(fam)  # pragma: no cover


def penalty_curvature_lower(spec: PenaltySpec, t):
    """Smallest one-sided second derivative of ``p_lam`` at ``t > 0``.

    At a kink the minimum over the adjacent pieces is returned, so the value
    is a lower bound on the generalized second derivative.
    """
    t = np.asarray(t, dtype=float)
    lam, k = spec.lam, spec.shape
    fam = spec.family
    if fam is Family.L1:
        v = np.zeros_like(t)
    elif fam is Family.SCAD:
        v = np.where((t >= lam) & (t <= k * lam), -1.0 / (k - 1), 0.0)
    elif fam is Family.MCP:
        v = np.where(t <= k * lam, -1.0 / k, 0.0)
    elif fam is Family.FIRM:
        v = np.where(t <= k, -lam / k, 0.0)
    elif fam is Family.LOG:
        v = -lam * k**2 / (k * t + 1) ** 2
    elif fam is Family.EXP:
        v = -lam * k**2 * np.exp(-k * t)
    else:
        raise UnsupportedPenaltyError(f"{fam.value} has no finite curvature bound")
    return _out(v, t)


def penalty_rho(spec: PenaltySpec) -> float:
    """Slope constant ``rho`` with ``lim_{t->0+} p'(t) = lam * rho``."""
    fam = spec.family
    if fam is Family.LHALF:
        raise UnsupportedPenaltyError("lhalf: derivative diverges at 0+")
    if fam in (Family.LOG, Family.EXP):
        return spec.shape
    return 1.0


def penalty_mu(spec: PenaltySpec) -> float:
    """Smallest ``mu`` such that ``p_lam(t) + mu t^2 / 2`` is convex."""
    lam, k = spec.lam, spec.shape
    fam = spec.family
    if fam is Family.LHALF:
        raise UnsupportedPenaltyError("lhalf is not weakly convex")
    if fam is Family.L1:
        return 0.0
    if fam is Family.SCAD:
        return 1.0 / (k - 1)
    if fam is Family.MCP:
        return 1.0 / k
    if fam is Family.FIRM:
        return lam / k
    # LOG and EXP: sup of -p'' is attained at 0+
    return lam * k**2


def soft_threshold(v, w):
    """Weighted soft threshold ``v - max(-w, min(v, w))``, componentwise."""
    v = np.asarray(v, dtype=float)
    return v - np.maximum(-w, np.minimum(v, w))


def prox(spec: PenaltySpec, v, tau: float):
    """Proximal map of ``tau * sum_j p_lam(|u_j|)``, vectorized over ``v``.

    Raises
    ------
    UnsupportedPenaltyError
        For EXP, which has no closed-form prox; solve it with the
        reweighted-l1 algorithm instead.
    PenaltyDomainError
        If ``tau * mu >= 1``, where the prox may be set-valued.
    """
    if not tau > 0:
        raise PenaltyDomainError(f"tau must be positive, got {tau}")
    fam = spec.family
    if fam is Family.EXP:
        raise UnsupportedPenaltyError(
            "exp has no closed-form prox; use the reweighted-l1 solver (algorithm='irl1')"
        )
    if fam is not Family.LHALF and tau * penalty_mu(spec) >= 1:
        raise PenaltyDomainError(
            f"tau*mu = {tau * penalty_mu(spec):.4g} >= 1; prox is not single-valued"
        )
    v = np.asarray(v, dtype=float)
    a = np.abs(v)
    s = np.sign(v)
    lam, k = spec.lam, spec.shape
    if fam is Family.L1:
        u = np.maximum(a - tau * lam, 0.0)
    elif fam is Family.SCAD:
        u = np.where(
            a <= lam * (1 + tau),
            np.maximum(a - tau * lam, 0.0),
            np.where(a <= k * lam, ((k - 1) * a - tau * k * lam) / (k - 1 - tau), a),
        )
    elif fam in (Family.MCP, Family.FIRM):
        gam = k if fam is Family.MCP else k / lam
        u = np.where(
            a <= tau * lam,
            0.0,
            np.where(a <= gam * lam, (a - tau * lam) / (1 - tau / gam), a),
        )
    elif fam is Family.LOG:
        u = _prox_log(a, tau * lam, k)
    elif fam is Family.LHALF:
        u = _prox_half(a, tau * lam)
    else:  # pragma: no cover
        raise UnsupportedPenaltyError(fam)
    return _out(s * u, v)


def prox_scalar(spec: PenaltySpec, v: float, tau: float) -> float:
    """Scalar ``argmin_u (u - v)^2 / 2 + tau * p_lam(|u|)``."""
    return float(prox(spec, float(v), tau))


def _prox_log(a, kappa, c):
    # stationary points of (u - a)^2/2 + kappa*log(1 + c u) on u >= 0 solve
    # c u^2 + (1 - c a) u + (kappa c - a) = 0
    a = np.atleast_1d(a)
    qb = 1 - c * a
    qc = kappa * c - a
    disc = qb**2 - 4 * c * qc
    sq = np.sqrt(np.maximum(disc, 0.0))
    best = np.zeros_like(a)
    best_obj = 0.5 * a**2
    for root in ((-qb - sq) / (2 * c), (-qb + sq) / (2 * c)):
        ok = (disc >= 0) & (root > 0)
        r = np.where(ok, root, 0.0)
        obj = 0.5 * (r - a) ** 2 + kappa * np.log1p(c * r)
        better = ok & ((obj < best_obj - _TIE_TOL) | ((np.abs(obj - best_obj) <= _TIE_TOL) & (r < best)))
        best = np.where(better, r, best)
        best_obj = np.where(better, obj, best_obj)
    return best


def _prox_half(a, kappa):
    # half thresholding for (u - a)^2/2 + kappa*sqrt(|u|)
    a = np.atleast_1d(a)
    thresh = 54 ** (1 / 3) / 4 * (2 * kappa) ** (2 / 3)
    out = np.zeros_like(a)
    big = a > thresh
    if np.any(big):
        ab = a[big]
        phi = np.arccos(np.clip(kappa / 4 * (ab / 3) ** -1.5, -1.0, 1.0))
        out[big] = 2 / 3 * ab * (1 + np.cos(2 * np.pi / 3 - 2 * phi / 3))
    return out


def weight_vector(spec: PenaltySpec, beta, eps1: float):
    """Reweighting slopes: ``max(p'(|beta_j|), eps1)`` off zero, ``lam * rho`` at zero."""
    if not eps1 > 0:
        raise ValueError(f"eps1 must be positive, got {eps1}")
    if spec.family is Family.LHALF:
        raise UnsupportedPenaltyError("lhalf has no finite slope at 0 and cannot be reweighted")
    beta = np.asarray(beta, dtype=float)
    a = np.abs(beta)
    nz = a > 0
    w = np.full(a.shape, spec.lam * penalty_rho(spec))
    if np.any(nz):
        w[nz] = np.maximum(_derivative(spec, a[nz]), eps1)
    return w
