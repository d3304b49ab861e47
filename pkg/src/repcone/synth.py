"""Synthetic embedding scenarios with known ground truth.

Spherical-cap classes give every geometric claim a sharp oracle: the
true axis and half-angle are known by construction, vectors are exactly
unit-norm, and caps at chosen separations are linearly separable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embstore import EmbeddingSet
from .errors import DimensionError, ScenarioError, ValidationError

MIN_HALF_ANGLE = 1e-6


@dataclass(frozen=True)
class CapSpec:
    """A spherical-cap class: unit axis, half-angle (rad), sample count."""

    axis: np.ndarray
    half_angle: float
    count: int
    dimension: int
    seed: int

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=np.float64)
        if axis.shape != (self.dimension,):
            raise DimensionError(f"axis shape {axis.shape} != ({self.dimension},)")
        nrm = np.linalg.norm(axis)
        if nrm == 0:
            raise ValidationError("cap axis must be nonzero")
        axis = axis / nrm
        axis.setflags(write=False)
        object.__setattr__(self, "axis", axis)
        if not (0 < self.half_angle < np.pi / 2):
            raise ValidationError("half_angle must lie in (0, pi/2)")
        object.__setattr__(self, "half_angle", max(float(self.half_angle), MIN_HALF_ANGLE))
        if self.count < 1:
            raise ValidationError("count must be >= 1")
        if self.dimension < 2:
            raise ValidationError("dimension must be >= 2")


@dataclass(frozen=True)
class ScenarioSpec:
    """Ordered tasks, each a dict of global class id -> CapSpec.

    All caps share one input dimension; class axes must be pairwise
    separated by at least min_separation radians; labels are unique
    across the whole scenario.
    """

    tasks: tuple[dict[int, CapSpec], ...]
    dimension: int
    min_separation: float
    test_count: int = 0

    def all_classes(self) -> list[tuple[int, CapSpec]]:
        out = []
        for task in self.tasks:
            out.extend(sorted(task.items()))
        return out


def _sample_polar_cosines(rng, count: int, half_angle: float, d: int) -> np.ndarray:
    """Draw cos(theta) with theta distributed by cap surface measure.

    Density of t = cos(theta) on [cos h, 1] is proportional to
    (1 - t^2)^((d-3)/2); d = 2 reduces to theta uniform on [0, h],
    d = 3 to t uniform (Archimedes).
    """
    lo = np.cos(half_angle)
    if d == 2:
        return np.cos(rng.random(count) * half_angle)
    if d == 3:
        return lo + rng.random(count) * (1.0 - lo)
    expo = (d - 3) / 2.0
    peak = (1.0 - lo * lo) ** expo
    out = np.empty(count)
    filled = 0
    while filled < count:
        m = max(count - filled, 64)
        t = lo + rng.random(m) * (1.0 - lo)
        accept = rng.random(m) * peak <= (1.0 - t * t) ** expo
        got = t[accept]
        take = min(got.size, count - filled)
        out[filled : filled + take] = got[:take]
        filled += take
    return out


def _orthonormal_directions(rng, axis: np.ndarray, count: int) -> np.ndarray:
    """Uniform unit directions orthogonal to axis, one per row."""
    d = axis.shape[0]
    g = rng.standard_normal((count, d))
    g -= np.outer(g @ axis, axis)
    nrm = np.linalg.norm(g, axis=1, keepdims=True)
    # resample the measure-zero degenerate rows
    bad = np.flatnonzero(nrm[:, 0] < 1e-12)
    while bad.size:
        g2 = rng.standard_normal((bad.size, d))
        g2 -= np.outer(g2 @ axis, axis)
        g[bad] = g2
        nrm = np.linalg.norm(g, axis=1, keepdims=True)
        bad = np.flatnonzero(nrm[:, 0] < 1e-12)
    return g / nrm


def sample_cap(spec: CapSpec) -> EmbeddingSet:
    """Sample `count` unit vectors uniform over the cap's surface."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    t = _sample_polar_cosines(rng, spec.count, spec.half_angle, spec.dimension)
    w = _orthonormal_directions(rng, spec.axis, spec.count)
    vectors = t[:, None] * spec.axis[None, :] + np.sqrt(1.0 - t * t)[:, None] * w
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    return EmbeddingSet(task_id=f"cap-{spec.seed}", vectors=vectors)


def rotation_in_plane(d: int, i: int, j: int, angle: float) -> np.ndarray:
    """Rotation by `angle` in the (i, j) coordinate plane of R^d."""
    rot = np.eye(d)
    c, s = np.cos(angle), np.sin(angle)
    rot[i, i] = c
    rot[j, j] = c
    rot[i, j] = -s
    rot[j, i] = s
    return rot


def random_rotation(d: int, angle: float, seed: int) -> np.ndarray:
    """Rotation by `angle` in a uniformly random 2-plane of R^d."""
    rng = np.random.Generator(np.random.PCG64(seed))
    basis, _ = np.linalg.qr(rng.standard_normal((d, 2)))
    u, v = basis[:, 0], basis[:, 1]
    c, s = np.cos(angle), np.sin(angle)
    outer = np.outer
    return (
        np.eye(d)
        + (c - 1.0) * (outer(u, u) + outer(v, v))
        + s * (outer(v, u) - outer(u, v))
    )


def rotate_set(
    emb: EmbeddingSet,
    rotation: np.ndarray,
    jitter: float = 0.0,
    seed: int = 0,
) -> EmbeddingSet:
    """Apply one orthogonal map to every row, then an angular jitter.

    Jitter moves each row by exactly `jitter` radians in an independent
    random direction orthogonal to the row, keeping row alignment so
    before/after metrics stay meaningful.
    """
    rotation = np.asarray(rotation, dtype=np.float64)
    d = emb.d
    if rotation.shape != (d, d):
        raise DimensionError(f"rotation shape {rotation.shape} != ({d}, {d})")
    if not np.allclose(rotation.T @ rotation, np.eye(d), atol=1e-9):
        raise ValidationError("rotation is not orthogonal within 1e-9")
    out = emb.vectors @ rotation.T
    if jitter > 0.0:
        rng = np.random.Generator(np.random.PCG64(seed))
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        unit = out / norms
        perp = np.empty_like(unit)
        for i in range(unit.shape[0]):
            perp[i] = _orthonormal_directions(rng, unit[i], 1)[0]
        out = norms * (np.cos(jitter) * unit + np.sin(jitter) * perp)
    return EmbeddingSet(
        task_id=emb.task_id,
        vectors=out,
        labels=emb.labels,
        class_space=emb.class_space,
    )


@dataclass(frozen=True)
class GroundTruthCone:
    class_id: int
    axis: np.ndarray
    half_angle: float


def build_scenario(spec: ScenarioSpec) -> tuple[list[EmbeddingSet], list[GroundTruthCone]]:
    """Materialize per-task labeled sets plus the true cone per class.

    When spec.test_count > 0, each task yields a train set followed by a
    test set sampled from the same caps under a derived seed; ground
    truth is listed once per class.
    """
    pairs = spec.all_classes()
    ids = [cid for cid, _ in pairs]
    if len(set(ids)) != len(ids):
        raise ScenarioError("class ids must be unique across tasks")
    for k, (ca, sa) in enumerate(pairs):
        if sa.dimension != spec.dimension:
            raise ScenarioError(f"class {ca} dimension {sa.dimension} != {spec.dimension}")
        for cb, sb in pairs[k + 1 :]:
            cosang = float(np.clip(sa.axis @ sb.axis, -1.0, 1.0))
            if np.arccos(cosang) < spec.min_separation - 1e-12:
                raise ScenarioError(
                    f"axes of classes {ca} and {cb} separated by "
                    f"{np.degrees(np.arccos(cosang)):.2f} deg "
                    f"< required {np.degrees(spec.min_separation):.2f} deg"
                )
    sets: list[EmbeddingSet] = []
    truth = [GroundTruthCone(cid, cs.axis, cs.half_angle) for cid, cs in pairs]
    for t, task in enumerate(spec.tasks):
        splits = [("train", 0)]
        if spec.test_count > 0:
            splits.append(("test", 1))
        for split, bump in splits:
            mats, labs = [], []
            for cid, cap in sorted(task.items()):
                count = cap.count if split == "train" else spec.test_count
                sub = CapSpec(
                    axis=cap.axis,
                    half_angle=cap.half_angle,
                    count=count,
                    dimension=cap.dimension,
                    seed=cap.seed * 2 + bump,
                )
                mats.append(sample_cap(sub).vectors)
                labs.append(np.full(count, cid, dtype=np.uint32))
            sets.append(
                EmbeddingSet(
                    task_id=f"task{t}-{split}",
                    vectors=np.vstack(mats),
                    labels=np.concatenate(labs),
                    class_space=tuple(sorted(task)),
                )
            )
    return sets, truth


@dataclass(frozen=True)
class TwoTaskScenario:
    """A two-task stream plus held-out test sets and training knobs.

    trains/tests hold one EmbeddingSet per task (classes 0/1 then 2/3).
    settings carries the knob values the stream was calibrated against;
    training runs that want the documented forgetting/repair behavior
    should adopt them as-is.
    """

    trains: tuple[EmbeddingSet, EmbeddingSet]
    tests: tuple[EmbeddingSet, EmbeddingSet]
    settings: dict


def _antipodal_pair(axis, half, count, d, seed):
    # one class spread over two antipodal caps: not linearly separable
    a = sample_cap(CapSpec(axis=axis, half_angle=half, count=count // 2,
                           dimension=d, seed=seed))
    b = sample_cap(CapSpec(axis=-axis, half_angle=half,
                           count=count - count // 2, dimension=d, seed=seed + 1))
    return np.vstack([a.vectors, b.vectors])


def _single_cap(axis, half, count, d, seed):
    return sample_cap(CapSpec(axis=axis, half_angle=half, count=count,
                              dimension=d, seed=seed)).vectors


def two_task_scenario(kind: str = "lean", seed: int = 9,
                      n_train: int = 15000, n_test: int = 2000) -> TwoTaskScenario:
    """Build the calibrated two-task stream used by the demos and tests.

    kind="lean": task-1 classes are single caps on orthogonal axes; each
    task-2 cap leans 0.45 toward one task-1 axis. Trained sequentially the
    task-2 decoder columns capture the leaned-over region and task-1
    accuracy collapses while the encoder still separates task 1 (a fresh
    probe recovers it); trained with rehearsal the old columns are pulled
    back at every rehearsal event and final task-1 accuracy lands high.

    kind="xor": each task-1 class occupies two antipodal caps, so no
    linear readout of the raw inputs separates it; the encoder must fold
    the pairs before a probe can score well. Task-2 caps form one
    antipodal pair tilted 0.4 into the task-1 plane. Used to show probe
    accuracy rising between the untrained and final checkpoints.

    n_train/n_test are per class. Returned sets are deterministic in
    (kind, seed, n_train, n_test).
    """
    if kind == "lean":
        d_in, half1, half2, mix = 12, np.radians(14.0), np.radians(6.0), 0.45
        settings = {"d_in": d_in, "hidden": 128, "d_rep": 4, "lr": 5e-4,
                    "batch": 25, "gamma": 0.01, "cadence": 5000, "seed": seed}
    elif kind == "xor":
        d_in, half1, half2, mix = 12, np.radians(14.0), np.radians(10.0), 0.4
        settings = {"d_in": d_in, "hidden": 64, "d_rep": 4, "lr": 5e-4,
                    "batch": 32, "gamma": 0.01, "cadence": 5000, "seed": seed}
    else:
        raise ScenarioError(f"unknown scenario kind: {kind!r}")
    rng = np.random.Generator(np.random.PCG64(seed))
    u, w, p0, q0 = np.linalg.qr(rng.standard_normal((d_in, 4)))[0].T
    c = np.sqrt(1.0 - mix * mix)
    if kind == "lean":
        p, q = c * p0 + mix * u, c * q0 + mix * w
    else:
        p = c * p0 + mix * (u + w) / np.sqrt(2.0)
        q = -p

    def make(count, bump):
        base = seed * 10 + bump
        if kind == "lean":
            c0 = _single_cap(u, half1, count, d_in, base)
            c1 = _single_cap(w, half1, count, d_in, base + 2)
        else:
            c0 = _antipodal_pair(u, half1, count, d_in, base)
            c1 = _antipodal_pair(w, half1, count, d_in, base + 2)
        t1 = EmbeddingSet(task_id="task1", vectors=np.vstack([c0, c1]),
                          labels=np.array([0] * count + [1] * count, dtype=np.uint32),
                          class_space=(0, 1))
        c2 = _single_cap(p, half2, count, d_in, base + 4)
        c3 = _single_cap(q, half2, count, d_in, base + 5)
        t2 = EmbeddingSet(task_id="task2", vectors=np.vstack([c2, c3]),
                          labels=np.array([2] * count + [3] * count, dtype=np.uint32),
                          class_space=(2, 3))
        return t1, t2

    t1_tr, t2_tr = make(n_train, 0)
    t1_te, t2_te = make(n_test, 1000)
    return TwoTaskScenario(trains=(t1_tr, t2_tr), tests=(t1_te, t2_te),
                           settings=settings)


def spread_axes(n_axes: int, d: int, min_separation: float, seed: int) -> np.ndarray:
    """Random unit axes pairwise separated by at least min_separation.

    Rejection-samples until the constraint holds; raises ScenarioError
    when 10000 attempts cannot satisfy it.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    cos_max = np.cos(min_separation)
    axes: list[np.ndarray] = []
    attempts = 0
    while len(axes) < n_axes:
        cand = rng.standard_normal(d)
        cand /= np.linalg.norm(cand)
        if all(cand @ a <= cos_max for a in axes):
            axes.append(cand)
        attempts += 1
        if attempts > 10000:
            raise ScenarioError(
                f"cannot place {n_axes} axes {np.degrees(min_separation):.1f} deg apart in d={d}"
            )
    return np.vstack(axes)
