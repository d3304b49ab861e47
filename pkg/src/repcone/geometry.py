"""Representation-cone fitting and directional diagnostics.

The central object is the narrowest cone, apex at the origin, covering
at least a target fraction of a class's embedding vectors. Its axis is
found by subgradient ascent on the minimum cosine, wrapped in an outer
loop that peels away the worst-covered vectors until the coverage
target is met.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, EmptySetError, ValidationError

ALPHA_FLOOR = 1e-18


@dataclass(frozen=True)
class ConeFitConfig:
    learning_rate: float = 0.1
    epsilon: float = 1e-6
    coverage: float = 0.95
    max_inner_iters: int = 10_000
    line_search_shrink: float = 0.5

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be positive")
        if not (0 < self.coverage <= 1):
            raise ValidationError("coverage must lie in (0, 1]")
        if self.max_inner_iters < 1:
            raise ValidationError("max_inner_iters must be >= 1")
        if not (0 < self.line_search_shrink < 1):
            raise ValidationError("line_search_shrink must lie in (0, 1)")


@dataclass(frozen=True)
class Cone:
    """Fitted cone: unit axis, aperture = min cosine over the kept set."""

    axis: np.ndarray
    aperture: float
    coverage_target: float
    kept_count: int
    converged: bool
    kept_indices: np.ndarray
    trace: tuple[float, ...] | None = None

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=np.float64)
        axis.setflags(write=False)
        object.__setattr__(self, "axis", axis)
        idx = np.asarray(self.kept_indices, dtype=np.int64)
        idx.setflags(write=False)
        object.__setattr__(self, "kept_indices", idx)

    @property
    def d(self) -> int:
        return self.axis.shape[0]


def _as_rows(vectors) -> np.ndarray:
    if hasattr(vectors, "vectors"):
        vectors = vectors.vectors
    mat = np.asarray(vectors, dtype=np.float64)
    if mat.ndim == 1:
        mat = mat[None, :]
    if mat.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got ndim={mat.ndim}")
    return mat


def _unit_rows(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValidationError("zero vector in cone-fit input")
    if not np.all(np.isfinite(mat)):
        raise ValidationError("non-finite vector in cone-fit input")
    return mat / norms


def _ascend_min_cosine(
    unit: np.ndarray,
    c: np.ndarray,
    alpha: float,
    config: ConeFitConfig,
    trace: list[float] | None,
) -> tuple[np.ndarray, bool]:
    """Maximize min_i cos(v_i, c) over unit c by accepted-step ascent.

    Step direction is the currently worst-covered vector; a step is
    accepted only if the minimum cosine does not decrease, otherwise
    alpha shrinks. Stops when the proposed coordinate changes all fall
    below epsilon, alpha underflows, or the iteration cap is hit.
    """
    cosines = unit @ c
    cur_min = float(cosines.min())
    if trace is not None:
        trace.append(cur_min)
    for _ in range(config.max_inner_iters):
        direction = unit[int(np.argmin(cosines))]
        cand = c + alpha * direction
        cand = cand / np.linalg.norm(cand)
        if float(np.abs(cand - c).max()) < config.epsilon:
            return c, True
        new_cos = unit @ cand
        new_min = float(new_cos.min())
        if new_min >= cur_min:
            c = cand
            cosines = new_cos
            cur_min = new_min
            if trace is not None:
                trace.append(cur_min)
        else:
            alpha *= config.line_search_shrink
            if alpha < ALPHA_FLOOR:
                return c, True
    return c, False


def _min_norm_axis(unit: np.ndarray, max_iters: int = 20_000, tol: float = 1e-12):
    """Exact-optimum axis for max-min-cosine over a fixed vector set.

    By minimax duality the optimal axis is the normalized minimum-norm
    point of conv{v_i}; that point is found by away-step Frank-Wolfe on
    min ||sum_i lam_i v_i||^2 over the simplex. Returns None when the
    hull contains the origin (no half-space separates the set).
    """
    n = unit.shape[0]
    lam = np.zeros(n)
    lam[0] = 1.0
    x = unit[0].copy()
    for _ in range(max_iters):
        g = unit @ x
        s = int(np.argmin(g))
        if 2.0 * (x @ x - g[s]) <= tol * max(1.0, float(x @ x)):
            break
        active = np.flatnonzero(lam > 0)
        a = int(active[np.argmax(g[active])])
        d_fw = unit[s] - x
        d_aw = x - unit[a]
        if -(x @ d_fw) >= -(x @ d_aw):
            d, gamma_max, away = d_fw, 1.0, False
        else:
            la = lam[a]
            d, gamma_max, away = d_aw, la / (1.0 - la) if la < 1.0 else np.inf, True
        dd = float(d @ d)
        if dd <= 0.0:
            break
        gamma = min(max(-float(x @ d) / dd, 0.0), gamma_max)
        if gamma <= 0.0:
            break
        x = x + gamma * d
        if away:
            lam *= 1.0 + gamma
            lam[a] = max(lam[a] - gamma, 0.0)
        else:
            lam *= 1.0 - gamma
            lam[s] += gamma
    nrm = np.linalg.norm(x)
    return x / nrm if nrm > 1e-12 else None


def fit_cone(
    vectors,
    config: ConeFitConfig | None = None,
    init: np.ndarray | None = None,
    record_trace: bool = False,
) -> Cone:
    """Fit the narrowest cone covering >= coverage of the input rows.

    Outer rounds alternate axis optimization with peeling the
    ceil((|V| - ceil(rho n))/2) lowest-cosine rows until only the
    coverage target remains; a final optimization pass then runs on the
    kept set so the reported aperture is tight for that set.
    """
    config = config or ConeFitConfig()
    mat = _as_rows(vectors)
    n = mat.shape[0]
    if n == 0:
        raise EmptySetError("cannot fit a cone to zero vectors")
    unit = _unit_rows(mat)
    d = mat.shape[1]
    if init is not None:
        c = np.asarray(init, dtype=np.float64)
        if c.shape != (d,):
            raise DimensionError(f"init shape {c.shape} != ({d},)")
        nrm = np.linalg.norm(c)
        if nrm == 0:
            raise ValidationError("init vector must be nonzero")
        c = c / nrm
    else:
        total = unit.sum(axis=0)
        nrm = np.linalg.norm(total)
        if nrm == 0:
            # antipodal cancellation: fall back to the first row
            c = unit[0].copy()
        else:
            c = total / nrm

    keep_target = math.ceil(config.coverage * n)
    kept = np.arange(n, dtype=np.int64)
    trace: list[float] | None = [] if record_trace else None
    converged = True

    while kept.size > keep_target:
        c, ok = _ascend_min_cosine(unit[kept], c, config.learning_rate, config, trace)
        converged = converged and ok
        peel = math.ceil((kept.size - keep_target) / 2)
        cosines = unit[kept] @ c
        # stable sort: ascending cosine, ties by ascending row index
        order = np.argsort(cosines, kind="stable")
        kept = np.sort(kept[order[peel:]])

    # optimize-and-reselect until the covered set is self-consistent:
    # swapping in the best-covered rows for the current axis can only
    # raise the binding minimum, so this loop is monotone and finite.
    # the first round keeps the subgradient ascent (it also handles sets
    # whose hull contains the origin); later rounds use the exact
    # min-norm solve alone, which is both faster and tighter
    first = True
    for _ in range(50):
        if first:
            c, ok = _ascend_min_cosine(unit[kept], c, config.learning_rate, config, trace)
            converged = converged and ok
            first = False
        refined = _min_norm_axis(unit[kept], max_iters=4_000, tol=1e-11)
        if refined is not None and float((unit[kept] @ refined).min()) > float(
            (unit[kept] @ c).min()
        ):
            c = refined
            if trace is not None:
                trace.append(float((unit[kept] @ c).min()))
        if kept.size == n:
            break
        order = np.argsort(unit @ c, kind="stable")
        kept2 = np.sort(order[n - kept.size:])
        if np.array_equal(kept2, kept):
            break
        kept = kept2

    # the alternation above is exact per set but can settle in a poor
    # basin of the discard choice; sweep seeded starts (half jitters of
    # the incumbent axis, half uniform) and keep the best pair found
    if keep_target < n:
        best = float((unit[kept] @ c).min())
        rng = np.random.Generator(np.random.PCG64(keep_target))
        for s in range(16):
            g = rng.standard_normal(d)
            cx = c + (0.03 * 2.0**(s // 2)) * g if s % 2 == 0 else g
            cx = cx / np.linalg.norm(cx)
            sel = np.sort(np.argsort(unit @ cx, kind="stable")[n - keep_target:])
            for _ in range(15):
                ax = _min_norm_axis(unit[sel], max_iters=600, tol=1e-8)
                if ax is None:
                    break
                cx = ax
                sel2 = np.sort(np.argsort(unit @ cx, kind="stable")[n - keep_target:])
                if np.array_equal(sel2, sel):
                    break
                sel = sel2
            val = float((unit[sel] @ cx).min())
            if val > best:
                best, c, kept = val, cx, sel

    # exact polish of the final set
    refined = _min_norm_axis(unit[kept])
    if refined is not None and float((unit[kept] @ refined).min()) > float(
        (unit[kept] @ c).min()
    ):
        c = refined
        if trace is not None and (not trace or float((unit[kept] @ c).min()) > trace[-1]):
            trace.append(float((unit[kept] @ c).min()))

    aperture = float((unit[kept] @ c).min())
    return Cone(
        axis=c,
        aperture=aperture,
        coverage_target=config.coverage,
        kept_count=int(kept.size),
        converged=converged,
        kept_indices=kept,
        trace=tuple(trace) if trace is not None else None,
    )


def _unit_vector(x, what: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"{what} must be 1-D")
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise ValidationError(f"{what} must be nonzero")
    return v / nrm


def relative_position(v, cone: Cone) -> float:
    """Cosine between v and the cone axis, in [-1, 1]."""
    u = _unit_vector(v, "vector")
    if u.shape != cone.axis.shape:
        raise DimensionError(f"vector dim {u.shape[0]} != cone dim {cone.d}")
    return float(np.clip(u @ cone.axis, -1.0, 1.0))


def cone_membership(x, cone: Cone) -> bool:
    """True iff cos(x, axis) >= aperture - 1e-12."""
    return relative_position(x, cone) >= cone.aperture - 1e-12


@dataclass(frozen=True)
class CosineHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    sample_count: int
    class_pair: tuple[int, int]

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=np.float64)
        counts = np.asarray(self.counts, dtype=np.int64)
        if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise ValidationError("bin_edges must be strictly increasing")
        if counts.shape != (edges.size - 1,):
            raise ValidationError("counts length must be len(bin_edges) - 1")
        if int(counts.sum()) != self.sample_count:
            raise ValidationError("counts must sum to sample_count")
        edges.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "counts", counts)


def cosine_pair_distribution(
    a, b, samples: int, bins: int = 100, seed: int = 0
) -> CosineHistogram:
    """Histogram of cosines between random cross pairs of two sets.

    Draws `samples` independent (row of a, row of b) pairs uniformly
    with replacement; bins are equal-width on [-1, 1], half-open except
    the last, which is closed at 1.0.
    """
    mat_a = _unit_rows(_as_rows(a))
    mat_b = _unit_rows(_as_rows(b))
    if mat_a.shape[0] == 0 or mat_b.shape[0] == 0:
        raise EmptySetError("cosine_pair_distribution needs nonempty sets")
    if mat_a.shape[1] != mat_b.shape[1]:
        raise DimensionError("sets have different dimensions")
    if samples < 1:
        raise ValidationError("samples must be >= 1")
    if bins < 1:
        raise ValidationError("bins must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    ia = rng.integers(0, mat_a.shape[0], size=samples)
    ib = rng.integers(0, mat_b.shape[0], size=samples)
    cosines = np.clip(np.einsum("ij,ij->i", mat_a[ia], mat_b[ib]), -1.0, 1.0)
    edges = np.linspace(-1.0, 1.0, bins + 1)
    counts, _ = np.histogram(cosines, bins=edges)
    pair = (
        getattr(a, "class_id", -1) if not isinstance(a, np.ndarray) else -1,
        getattr(b, "class_id", -1) if not isinstance(b, np.ndarray) else -1,
    )
    return CosineHistogram(
        bin_edges=edges,
        counts=counts.astype(np.int64),
        sample_count=samples,
        class_pair=(int(pair[0]), int(pair[1])),
    )


def cone_report(cone: Cone) -> dict:
    """JSON-ready summary of a fitted cone."""
    return {
        "axis": [float(x) for x in cone.axis],
        "aperture": float(cone.aperture),
        "coverage_target": float(cone.coverage_target),
        "kept_count": int(cone.kept_count),
        "converged": bool(cone.converged),
    }


def save_cone(path, cone: Cone) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cone_report(cone), fh, indent=2)
        fh.write("\n")


def load_cone_report(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def histogram_csv(hist: CosineHistogram) -> str:
    """CSV rows `bin_lo,bin_hi,count`, one per bin."""
    lines = ["bin_lo,bin_hi,count"]
    for k in range(hist.counts.size):
        lo = repr(float(hist.bin_edges[k]))
        hi = repr(float(hist.bin_edges[k + 1]))
        lines.append(f"{lo},{hi},{int(hist.counts[k])}")
    return "\n".join(lines) + "\n"
