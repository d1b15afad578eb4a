"""Quadratic measurement model ``y_i = beta' Z_i beta + noise``.

Measurements are stored either densely (``n x d x d`` symmetric stack) or as
rank-one factors ``z_i`` with ``Z_i = z_i z_i'``.  The least-squares loss is

    L(beta) = 1/(4n) * sum_i (beta' Z_i beta - y_i)^2.

All reductions run in a fixed order, so repeated evaluations are
bit-identical.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SYM_TOL = 1e-12
BINARY_MAGIC = b"WCCPQMR\x00"
FORMAT_VERSION = 1


class DegenerateDataError(ValueError):
    pass


class DimensionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Immutable measurement ensemble.

    Exactly one of ``dense`` (shape ``(n, d, d)``) or ``factors`` (shape
    ``(n, d)``) is set.  Use :meth:`from_dense` / :meth:`from_factors` to
    construct; they validate and symmetrize.
    """

    y: np.ndarray
    dense: np.ndarray | None = None
    factors: np.ndarray | None = None

    @classmethod
    def from_dense(cls, Z, y) -> "MeasurementSet":
        Z = np.array(Z, dtype=float)
        y = np.array(y, dtype=float).reshape(-1)
        if Z.ndim != 3 or Z.shape[1] != Z.shape[2]:
            raise DimensionError(f"dense measurements must have shape (n, d, d), got {Z.shape}")
        if Z.shape[0] == 0 or Z.shape[1] == 0:
            raise DegenerateDataError("need n >= 1 and d >= 1")
        if np.max(np.abs(Z - Z.transpose(0, 2, 1))) > 0:
            if np.max(np.abs(Z - Z.transpose(0, 2, 1))) > SYM_TOL:
                warnings.warn("asymmetric measurement matrices symmetrized as (Z + Z')/2", stacklevel=2)
            Z = 0.5 * (Z + Z.transpose(0, 2, 1))
        obj = cls(y=y, dense=Z)
        obj._validate()
        return obj

    @classmethod
    def from_factors(cls, factors, y) -> "MeasurementSet":
        F = np.array(factors, dtype=float)
        y = np.array(y, dtype=float).reshape(-1)
        if F.ndim != 2:
            raise DimensionError(f"rank-one factors must have shape (n, d), got {F.shape}")
        if F.shape[0] == 0 or F.shape[1] == 0:
            raise DegenerateDataError("need n >= 1 and d >= 1")
        obj = cls(y=y, factors=F)
        obj._validate()
        return obj

    def _validate(self):
        if self.y.shape != (self.count,):
            raise DimensionError(f"expected {self.count} responses, got {self.y.shape[0]}")
        if not np.all(np.isfinite(self.y)):
            raise ValueError("responses must be finite")
        for arr in (self.y, self.dense, self.factors):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def is_rank_one(self) -> bool:
        return self.factors is not None

    @property
    def mode(self) -> str:
        return "rank1" if self.is_rank_one else "dense"

    @property
    def dim(self) -> int:
        return (self.factors if self.is_rank_one else self.dense).shape[1]

    @property
    def count(self) -> int:
        return (self.factors if self.is_rank_one else self.dense).shape[0]

    def matrices(self) -> np.ndarray:
        """Dense ``(n, d, d)`` view of the operators (materialized for rank-one data)."""
        if self.is_rank_one:
            return np.einsum("ij,ik->ijk", self.factors, self.factors)
        return self.dense

    def to_dense(self) -> "MeasurementSet":
        return MeasurementSet.from_dense(self.matrices(), self.y)

    def with_responses(self, y) -> "MeasurementSet":
        if self.is_rank_one:
            return MeasurementSet.from_factors(self.factors, y)
        return MeasurementSet.from_dense(self.dense, y)

    def subset(self, rows) -> "MeasurementSet":
        """Keep the measurements indexed by ``rows``."""
        rows = np.asarray(rows)
        if self.is_rank_one:
            return MeasurementSet.from_factors(self.factors[rows], self.y[rows])
        return MeasurementSet.from_dense(self.dense[rows], self.y[rows])

    def restrict(self, support) -> "MeasurementSet":
        """Restrict every operator to the coordinates in ``support``."""
        idx = np.asarray(sorted(support), dtype=int)
        if self.is_rank_one:
            return MeasurementSet.from_factors(self.factors[:, idx], self.y)
        return MeasurementSet.from_dense(self.dense[:, idx][:, :, idx], self.y)

    def max_abs(self) -> np.ndarray:
        """Entrywise ``|Z_i|_inf`` for each measurement."""
        if self.is_rank_one:
            return np.max(np.abs(self.factors), axis=1) ** 2
        return np.max(np.abs(self.dense), axis=(1, 2))


@dataclass(frozen=True)
class StandardizationReport:
    response_shift: float
    operator_scale: float

    def apply(self, data: MeasurementSet) -> MeasurementSet:
        y = data.y - self.response_shift
        if data.is_rank_one:
            return MeasurementSet.from_factors(np.sqrt(self.operator_scale) * data.factors, y)
        return MeasurementSet.from_dense(self.operator_scale * data.dense, y)


def standardize(raw: MeasurementSet) -> tuple[MeasurementSet, StandardizationReport]:
    """Center responses and rescale all operators so ``sum_i |Z_i|_inf^2 = n``.

    Estimates computed on the standardized data live in standardized
    coordinates: a raw-scale signal ``b`` satisfies ``b = sqrt(scale) * b_std``
    up to the response shift.
    """
    m = raw.max_abs()
    total = float(np.sum(m**2))
    if not total > 0:
        raise DegenerateDataError("all measurement matrices are zero")
    report = StandardizationReport(
        response_shift=float(np.mean(raw.y)),
        operator_scale=float(np.sqrt(raw.count / total)),
    )
    return report.apply(raw), report


def _check_beta(data, beta):
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (data.dim,):
        raise DimensionError(f"beta must have shape ({data.dim},), got {beta.shape}")
    return beta


def apply_operators(data: MeasurementSet, beta) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(A, q)`` with ``q_i = beta' Z_i beta``.

    ``A`` is ``Z_i beta`` stacked as ``(n, d)`` for dense data and the
    projections ``z_i' beta`` of shape ``(n,)`` for rank-one data.
    """
    beta = _check_beta(data, beta)
    if data.is_rank_one:
        a = data.factors @ beta
        return a, a * a
    n, d = data.count, data.dim
    A = (data.dense.reshape(n * d, d) @ beta).reshape(n, d)
    return A, A @ beta


def gradient_from(data: MeasurementSet, A, r) -> np.ndarray:
    """Gradient from cached :func:`apply_operators` output and residuals."""
    if data.is_rank_one:
        return data.factors.T @ (r * A) / data.count
    return A.T @ r / data.count


def residuals(data: MeasurementSet, beta) -> np.ndarray:
    _, q = apply_operators(data, beta)
    return q - data.y


def loss(data: MeasurementSet, beta) -> float:
    r = residuals(data, beta)
    return float(r @ r) / (4 * data.count)


def gradient(data: MeasurementSet, beta) -> np.ndarray:
    A, q = apply_operators(data, beta)
    return gradient_from(data, A, q - data.y)


def curvature_form(data: MeasurementSet, beta, g) -> float:
    """Hessian quadratic form ``g' (nabla^2 L)(beta) g``."""
    g = _check_beta(data, g)
    A, q = apply_operators(data, beta)
    r = q - data.y
    n = data.count
    if data.is_rank_one:
        zg = data.factors @ g
        cross = A * zg
        gzg = zg * zg
    else:
        cross = A @ g
        gzg = np.einsum("j,ijk,k->i", g, data.dense, g)
    return float(2 * (cross @ cross) / n + (r @ gzg) / n)


def hessian(data: MeasurementSet, beta, support=None) -> np.ndarray:
    """Hessian of the loss at ``beta``, optionally restricted to ``support``."""
    A, q = apply_operators(data, beta)
    r = q - data.y
    n = data.count
    idx = np.arange(data.dim) if support is None else np.asarray(sorted(support), dtype=int)
    if data.is_rank_one:
        F = data.factors[:, idx]
        B = A[:, None] * F
        H = 2 * B.T @ B / n + (F.T * r) @ F / n
    else:
        B = A[:, idx]
        Zs = data.dense[:, idx][:, :, idx]
        H = 2 * B.T @ B / n + np.tensordot(r, Zs, axes=1) / n
    return 0.5 * (H + H.T)


# --------------------------------------------------------------------------- io


def save_json(data: MeasurementSet, path) -> None:
    doc = {
        "version": FORMAT_VERSION,
        "d": data.dim,
        "n": data.count,
        "mode": data.mode,
        "y": data.y.tolist(),
    }
    if data.is_rank_one:
        doc["factors"] = data.factors.reshape(-1).tolist()
    else:
        doc["Z"] = data.dense.reshape(-1).tolist()
    Path(path).write_text(json.dumps(doc))


def _from_parts(mode, d, n, y, payload) -> MeasurementSet:
    payload = np.asarray(payload, dtype=float)
    if mode == "rank1":
        if payload.size != n * d:
            raise DimensionError(f"expected {n * d} factor entries, got {payload.size}")
        return MeasurementSet.from_factors(payload.reshape(n, d), y)
    if mode == "dense":
        if payload.size != n * d * d:
            raise DimensionError(f"expected {n * d * d} matrix entries, got {payload.size}")
        return MeasurementSet.from_dense(payload.reshape(n, d, d), y)
    raise ValueError(f"unknown storage mode {mode!r}")


def load_json(path) -> MeasurementSet:
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported data format version {doc.get('version')!r}")
    mode = doc["mode"]
    payload = doc["factors"] if mode == "rank1" else doc["Z"]
    return _from_parts(mode, int(doc["d"]), int(doc["n"]), doc["y"], payload)


# binary layout (little endian): 8-byte magic, u32 version, u32 mode
# (0 dense, 1 rank1), u64 d, u64 n, f64[n] y, f64 payload
_HEADER = struct.Struct("<8sII")
_DIMS = struct.Struct("<QQ")


def save_binary(data: MeasurementSet, path) -> None:
    payload = data.factors if data.is_rank_one else data.dense
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(BINARY_MAGIC, FORMAT_VERSION, int(data.is_rank_one)))
        fh.write(_DIMS.pack(data.dim, data.count))
        fh.write(data.y.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(payload).astype("<f8").tobytes())


def load_binary(path) -> MeasurementSet:
    raw = Path(path).read_bytes()
    magic, version, mode = _HEADER.unpack_from(raw, 0)
    if magic != BINARY_MAGIC:
        raise ValueError("not a binary measurement file")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported data format version {version}")
    d, n = _DIMS.unpack_from(raw, _HEADER.size)
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size + _DIMS.size)
    return _from_parts("rank1" if mode == 1 else "dense", d, n, body[:n], body[n:])


def load_data(path) -> MeasurementSet:
    """Load a measurement file, detecting the binary format by its magic header."""
    with open(path, "rb") as fh:
        head = fh.read(len(BINARY_MAGIC))
    if head == BINARY_MAGIC:
        return load_binary(path)
    return load_json(path)


def save_data(data: MeasurementSet, path) -> None:
    if str(path).endswith((".bin", ".qmr")):
        save_binary(data, path)
    else:
        save_json(data, path)
