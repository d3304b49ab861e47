"""Forgetting diagnostics: neighborhood-order correlation and axis rotation.

Given row-aligned before/after snapshots of a class's representations,
topo_pearson asks whether instances kept their relative arrangement:
each instance's neighbors are found in the before space, and the
correlation between an instance's after-cosine to the cone axis and
the summed after-cosines of those neighbors is reported. rotation_delta
tracks how a class's cone axis moves relative to its decoder column.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, UndefinedCorrelationError, ValidationError
from .geometry import Cone


@dataclass(frozen=True)
class NeighborhoodIndex:
    """Exact Euclidean nearest neighbors; row i's list excludes i."""

    n: int
    neighbor_ids: np.ndarray  # (size, min(n, size - 1)) int64

    def __post_init__(self):
        ids = np.asarray(self.neighbor_ids, dtype=np.int64)
        ids.setflags(write=False)
        object.__setattr__(self, "neighbor_ids", ids)


def _matrix(x) -> np.ndarray:
    if hasattr(x, "vectors"):
        x = x.vectors
    mat = np.asarray(x, dtype=np.float64)
    if mat.ndim != 2:
        raise DimensionError("expected a 2-D matrix of row vectors")
    return mat


def knn_index(vectors, n: int) -> NeighborhoodIndex:
    """n nearest rows per row by Euclidean distance, ties by lower index."""
    mat = _matrix(vectors)
    size = mat.shape[0]
    if size < 2:
        raise ValidationError("need at least 2 rows for nearest neighbors")
    if n < 1:
        raise ValidationError("n must be >= 1")
    k = min(n, size - 1)
    # exact pairwise distances via explicit differences: the expanded
    # dot-product identity can flip near-ties, the oracle must match
    d2 = np.sum((mat[:, None, :] - mat[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")
    return NeighborhoodIndex(n=n, neighbor_ids=order[:, :k])


def pearson(x, y) -> float:
    """Sample Pearson correlation; undefined for n < 3 or zero variance."""
    xv = np.asarray(x, dtype=np.float64).ravel()
    yv = np.asarray(y, dtype=np.float64).ravel()
    if xv.shape != yv.shape:
        raise DimensionError("pearson inputs must have equal length")
    if xv.size < 3:
        raise UndefinedCorrelationError("need at least 3 points")
    dx = xv - xv.mean()
    dy = yv - yv.mean()
    sx = float(dx @ dx)
    sy = float(dy @ dy)
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("zero variance input")
    return float(np.clip((dx @ dy) / np.sqrt(sx * sy), -1.0, 1.0))


def topo_pearson(before, after, cone_after: Cone, n: int) -> float:
    """Neighborhood-order retention statistic for one class.

    Neighbors come from the before matrix; cosines come from the after
    matrix against the after-fit cone axis. Rows must be aligned.
    """
    b = _matrix(before)
    a = _matrix(after)
    if b.shape[0] != a.shape[0]:
        raise DimensionError("before/after must be row-aligned")
    if b.shape[0] < 3:
        raise UndefinedCorrelationError("need at least 3 instances")
    norms = np.linalg.norm(a, axis=1)
    if np.any(norms == 0):
        raise ValidationError("zero vector in after matrix")
    x = (a @ cone_after.axis) / norms
    idx = knn_index(b, n)
    y = x[idx.neighbor_ids].sum(axis=1)
    return pearson(x, y)


def _axis_of(c) -> np.ndarray:
    v = np.asarray(c.axis if isinstance(c, Cone) else c, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError("expected a vector or Cone")
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise ValidationError("zero vector")
    return v / nrm


def rotation_delta(c_before, c_after, w_k) -> float:
    """cos(after, w_k) - cos(before, w_k); positive = moved toward w_k."""
    b = _axis_of(c_before)
    a = _axis_of(c_after)
    w = _axis_of(w_k)
    if not (b.shape == a.shape == w.shape):
        raise DimensionError("mismatched vector dimensions")
    return float(a @ w - b @ w)


def decoder_drift(w_before, w_after) -> float:
    """Angle in radians between two decoder columns."""
    b = _axis_of(w_before)
    a = _axis_of(w_after)
    if b.shape != a.shape:
        raise DimensionError("mismatched vector dimensions")
    return float(np.arccos(np.clip(b @ a, -1.0, 1.0)))


@dataclass
class TopoReport:
    """Per (class, n) neighborhood-order correlations."""

    rows: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def add(self, class_id: int, n: int, value: float) -> None:
        self.rows.append({"class": int(class_id), "n": int(n), "pearson": float(value)})

    def csv(self) -> str:
        lines = ["class,n,pearson"]
        for r in self.rows:
            lines.append(f"{r['class']},{r['n']},{repr(float(r['pearson']))}")
        return "\n".join(lines) + "\n"


@dataclass
class RotationReport:
    """Per (event, class) axis rotation deltas and decoder drift angles."""

    rows: list[dict] = field(default_factory=list)
    drifts: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def add(self, event: int, class_id: int, delta: float) -> None:
        self.rows.append(
            {"event": int(event), "class": int(class_id), "delta_zeta": float(delta)}
        )

    def add_drift(self, event: int, class_id: int, angle: float) -> None:
        self.drifts.append(
            {"event": int(event), "class": int(class_id), "angle": float(angle)}
        )

    def csv(self) -> str:
        lines = ["event,class,delta_zeta"]
        for r in self.rows:
            lines.append(f"{r['event']},{r['class']},{repr(float(r['delta_zeta']))}")
        return "\n".join(lines) + "\n"
