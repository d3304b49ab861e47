"""Episodic memory, sparse replay, and the sequential training driver.

Tasks are consumed strictly in order. Every stream example is considered
once for storage at rate gamma; every N_tr stream examples of the
current task trigger one replay pass over floor(r * N_tr) memory items.
Replayed examples never advance the counters that drive checkpoints or
replay triggers, and are never re-stored.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .embstore import EmbeddingSet
from .errors import ScenarioError, ValidationError
from .learner import AdamState, Model, _class_loss_grads, adam_step, save_checkpoint


@dataclass(frozen=True)
class StoredExample:
    x: np.ndarray
    label: int
    source_task: str


class MemoryBuffer:
    """Append-only episodic memory with Bernoulli(gamma) storage."""

    def __init__(self, storage_rate: float, seed: int = 0):
        if not (0.0 <= storage_rate <= 1.0):
            raise ValidationError("storage_rate must lie in [0, 1]")
        self.storage_rate = float(storage_rate)
        self.seed = int(seed)
        self.entries: list[StoredExample] = []
        self._rng = np.random.Generator(np.random.PCG64(seed))

    def __len__(self) -> int:
        return len(self.entries)

    def consider_store(self, x, label: int, source_task: str) -> bool:
        """One storage decision for one live-stream example."""
        keep = self._rng.random() < self.storage_rate
        if keep:
            self.entries.append(
                StoredExample(np.asarray(x, dtype=np.float64), int(label), source_task)
            )
        return keep

    def consider_store_batch(self, xs, labels, source_task: str) -> np.ndarray:
        """Vectorized storage decisions, bit-identical to scalar calls.

        Generator.random(n) yields the same draws as n successive
        random() calls, so batching never changes what gets stored.
        """
        xs = np.asarray(xs, dtype=np.float64)
        labels = np.asarray(labels)
        keep = self._rng.random(xs.shape[0]) < self.storage_rate
        for i in np.flatnonzero(keep):
            self.entries.append(
                StoredExample(xs[i], int(labels[i]), source_task)
            )
        return keep


@dataclass(frozen=True)
class ReplaySchedule:
    """interval = N_tr stream examples between replays; None means never."""

    interval: int | None
    rate: float

    def __post_init__(self):
        if self.interval is not None and self.interval <= 0:
            raise ValidationError("interval must be positive or None")
        if not (0.0 <= self.rate <= 1.0):
            raise ValidationError("rate must lie in [0, 1]")

    @classmethod
    def seq(cls) -> "ReplaySchedule":
        return cls(interval=None, rate=0.0)

    @property
    def is_seq(self) -> bool:
        return self.interval is None


def replay_quota(schedule, rate: float | None = None) -> int | None:
    """floor(rate * interval); None signals a no-replay schedule.

    Accepts either a ReplaySchedule or (interval, rate) directly. The
    product is evaluated in exact rational arithmetic so decimal rates
    like 0.01 never round below an integer boundary.
    """
    if isinstance(schedule, ReplaySchedule):
        interval, r = schedule.interval, schedule.rate
    else:
        interval, r = schedule, rate
        if r is None:
            raise ValidationError("rate required when passing a bare interval")
    if interval is None:
        return None
    return int(Fraction(repr(float(r))) * int(interval))


def _draw_indices(
    buffer: MemoryBuffer, quota: int, rng: np.random.Generator
) -> np.ndarray:
    if quota < 0:
        raise ValidationError("quota must be >= 0")
    k = min(quota, len(buffer))
    if k == 0:
        return np.empty(0, dtype=np.int64)
    return rng.choice(len(buffer.entries), size=k, replace=False).astype(np.int64)


def draw_replay_batch(
    buffer: MemoryBuffer, quota: int, rng: np.random.Generator
) -> list[StoredExample]:
    """Uniform without-replacement sample of min(quota, len) entries."""
    return [buffer.entries[int(i)] for i in _draw_indices(buffer, quota, rng)]


@dataclass(frozen=True)
class CheckpointPlan:
    cadence: int = 5000
    batch_size: int = 32

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.cadence < self.batch_size:
            raise ValidationError("cadence must be >= batch_size")


def checkpoint_batches(plan: CheckpointPlan, total_examples: int) -> list[int]:
    """1-based batch indices closest to each multiple of the cadence.

    Assumes full batches of plan.batch_size; ties between the two
    straddling batches go to the earlier one.
    """
    if total_examples < plan.cadence:
        raise ValidationError("total_examples must be >= cadence")
    out = []
    k = 1
    while k * plan.cadence <= total_examples:
        point = k * plan.cadence
        lo = point // plan.batch_size
        lo = max(lo, 1)
        d_lo = abs(lo * plan.batch_size - point)
        d_hi = abs((lo + 1) * plan.batch_size - point)
        out.append(lo if d_lo <= d_hi else lo + 1)
        k += 1
    return out


def _nearest_batch_ends(batch_ends: np.ndarray, cadence: int) -> dict[int, int]:
    """Map batch index -> scheduled point, by nearest end count (earlier ties).

    Generalizes checkpoint_batches to streams whose task boundaries cut
    partial batches, by measuring actual cumulative stream examples.
    """
    total = int(batch_ends[-1])
    chosen: dict[int, int] = {}
    k = 1
    while k * cadence <= total:
        point = k * cadence
        diffs = np.abs(batch_ends - point)
        b = int(np.argmin(diffs))  # argmin takes the first = earlier batch on ties
        chosen[b] = point
        k += 1
    return chosen


@dataclass
class RunLog:
    """Everything a training run produced, JSON-serializable."""

    checkpoints: list[dict] = field(default_factory=list)
    replay_events: list[dict] = field(default_factory=list)
    task_boundaries: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def save(self, path) -> None:
        payload = {
            "checkpoints": self.checkpoints,
            "replay_events": self.replay_events,
            "task_boundaries": self.task_boundaries,
            "meta": self.meta,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "RunLog":
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        return cls(
            checkpoints=payload["checkpoints"],
            replay_events=payload["replay_events"],
            task_boundaries=payload["task_boundaries"],
            meta=payload.get("meta", {}),
        )


def _epoch_order(n: int, rng: np.random.Generator, shuffle: bool) -> np.ndarray:
    return rng.permutation(n) if shuffle else np.arange(n)


def sequential_train(
    tasks: list[EmbeddingSet],
    model: Model,
    schedule: ReplaySchedule,
    plan: CheckpointPlan,
    buffer: MemoryBuffer,
    out_dir,
    epochs_per_task: int = 1,
    learning_rate: float = 3e-5,
    seed: int = 0,
    shuffle: bool = True,
    record_replay_snapshots: bool = False,
) -> tuple[Model, RunLog]:
    """Train on tasks in order with sparse replay and cadence checkpoints.

    Writes an initial checkpoint at zero examples seen, one checkpoint
    per cadence point (at the nearest actual batch end), and a final
    state; returns the final model plus the full RunLog.
    """
    if not tasks:
        raise ScenarioError("no tasks to train on")
    for t in tasks:
        if t.labels is None:
            raise ValidationError(f"task {t.task_id!r} has no labels")
        if t.d != model.enc.d_in:
            raise ValidationError(
                f"task {t.task_id!r} dim {t.d} != encoder d_in {model.enc.d_in}"
            )
    if epochs_per_task < 1:
        raise ValidationError("epochs_per_task must be >= 1")
    os.makedirs(out_dir, exist_ok=True)

    position_of = {cid: k for k, cid in enumerate(model.dec.class_ids)}
    for t in tasks:
        missing = set(np.unique(t.labels).tolist()) - set(position_of)
        if missing:
            raise ValidationError(f"labels {sorted(missing)} not in decoder classes")

    ss = np.random.SeedSequence(seed)
    shuffle_ss, replay_ss = ss.spawn(2)
    shuffle_rng = np.random.Generator(np.random.PCG64(shuffle_ss))
    replay_rng = np.random.Generator(np.random.PCG64(replay_ss))

    # plan checkpoint batches from actual cumulative batch end counts
    ends: list[int] = []
    seen = 0
    for task in tasks:
        stream_len = task.n * epochs_per_task
        consumed = 0
        while consumed < stream_len:
            step_len = min(plan.batch_size, stream_len - consumed)
            consumed += step_len
            seen += step_len
            ends.append(seen)
    ckpt_at_batch = _nearest_batch_ends(np.asarray(ends, dtype=np.int64), plan.cadence)

    opt = AdamState(lr=learning_rate)
    params = model.params()
    log = RunLog(
        meta={
            "schedule": {"interval": schedule.interval, "rate": schedule.rate},
            "plan": {"cadence": plan.cadence, "batch_size": plan.batch_size},
            "buffer": {"storage_rate": buffer.storage_rate, "seed": buffer.seed},
            "epochs_per_task": epochs_per_task,
            "learning_rate": learning_rate,
            "seed": seed,
            "shuffle": shuffle,
            "out_dir": str(out_dir),
            "task_ids": [t.task_id for t in tasks],
        }
    )

    def snapshot(name: str, examples_seen: int) -> str:
        path = os.path.join(out_dir, name)
        save_checkpoint(path, model.with_params(params), opt.t, examples_seen)
        return path

    path0 = snapshot("ckpt0000.ckpt", 0)
    log.checkpoints.append(
        {"step": 0, "examples_seen": 0, "path": path0, "scheduled_point": 0}
    )

    quota = replay_quota(schedule)
    examples_seen = 0
    batch_index = -1
    ckpt_counter = 0

    def run_replay(task_id: str, task_examples: int) -> None:
        nonlocal params
        event_idx = len(log.replay_events)
        pre_path = post_path = None
        if record_replay_snapshots:
            pre_path = snapshot(f"replay{event_idx:03d}_pre.ckpt", examples_seen)
        indices = _draw_indices(buffer, quota, replay_rng)
        drawn = [buffer.entries[int(i)] for i in indices]
        for k in range(0, len(drawn), plan.batch_size):
            chunk = drawn[k : k + plan.batch_size]
            xs = np.stack([e.x for e in chunk])
            pos = np.array([position_of[e.label] for e in chunk], dtype=np.int64)
            model2 = model.with_params(params)
            _, grads = _class_loss_grads(model2.enc, model2.dec, xs, pos)
            params = adam_step(opt, params, grads)
        if record_replay_snapshots:
            post_path = snapshot(f"replay{event_idx:03d}_post.ckpt", examples_seen)
        log.replay_events.append(
            {
                "event": event_idx,
                "task_id": task_id,
                "task_examples": task_examples,
                "examples_seen": examples_seen,
                "step": opt.t,
                "drawn": len(drawn),
                "indices": [int(i) for i in indices],
                "source_tasks": [e.source_task for e in drawn],
                "pre_path": pre_path,
                "post_path": post_path,
            }
        )

    for task in tasks:
        task_start = examples_seen
        task_counter = 0
        next_trigger = schedule.interval if not schedule.is_seq else None
        for _ in range(epochs_per_task):
            order = _epoch_order(task.n, shuffle_rng, shuffle)
            xs_all = task.vectors[order]
            labels_all = task.labels[order]
            for k in range(0, task.n, plan.batch_size):
                xs = xs_all[k : k + plan.batch_size]
                labels = labels_all[k : k + plan.batch_size]
                pos = np.array([position_of[int(c)] for c in labels], dtype=np.int64)
                model2 = model.with_params(params)
                _, grads = _class_loss_grads(model2.enc, model2.dec, xs, pos)
                params = adam_step(opt, params, grads)
                buffer.consider_store_batch(xs, labels, task.task_id)
                examples_seen += xs.shape[0]
                task_counter += xs.shape[0]
                batch_index += 1
                while next_trigger is not None and task_counter >= next_trigger:
                    run_replay(task.task_id, next_trigger)
                    next_trigger += schedule.interval
                if batch_index in ckpt_at_batch:
                    ckpt_counter += 1
                    name = f"ckpt{ckpt_counter:04d}.ckpt"
                    path = snapshot(name, examples_seen)
                    log.checkpoints.append(
                        {
                            "step": opt.t,
                            "examples_seen": examples_seen,
                            "path": path,
                            "scheduled_point": ckpt_at_batch[batch_index],
                        }
                    )
        log.task_boundaries.append(
            {
                "task_id": task.task_id,
                "start_examples": task_start,
                "end_examples": examples_seen,
            }
        )

    final_path = os.path.join(out_dir, "final.ckpt")
    save_checkpoint(final_path, model.with_params(params), opt.t, examples_seen)
    log.meta["final_path"] = final_path
    log.meta["memory_size"] = len(buffer)
    log.save(os.path.join(out_dir, "runlog.json"))
    return model.with_params(params), log
