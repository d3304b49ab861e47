"""Frozen-encoder probing: per-checkpoint, per-task decoder retraining.

A probe answers "what does this encoder still know about task T?" by
training a fresh single-layer decoder on T's data with the encoder
held fixed, then scoring it on held-out data. Comparing that score
with the checkpoint's own decoder separates representation loss from
decoder mismatch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embstore import EmbeddingSet
from .errors import EmptySetError, ValidationError
from .learner import (
    AdamState,
    DecoderParams,
    EncoderParams,
    Model,
    SpanDecoderParams,
    adam_step,
    class_probabilities,
    encode,
    init_decoder,
    init_span_decoder,
    predict_span,
    softmax,
    load_checkpoint,
    span_f1,
    span_loss_grads,
    span_scores,
)
from .replay import RunLog

PLATEAU_DELTA = 1e-4
PLATEAU_EPOCHS = 3


@dataclass(frozen=True)
class ProbeConfig:
    epochs: int = 20
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    metric: str = "accuracy"  # or "span_f1"
    max_span_len: int = 30

    def __post_init__(self):
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_span_len < 1:
            raise ValidationError("bad probe hyperparameters")
        if self.metric not in ("accuracy", "span_f1"):
            raise ValidationError(f"unknown probe metric {self.metric!r}")


@dataclass(frozen=True)
class SpanExample:
    """One QA item: a token matrix in input space plus gold spans."""

    tokens: np.ndarray  # (L, d_in)
    gold_spans: tuple[tuple[int, int], ...]

    def __post_init__(self):
        mat = np.ascontiguousarray(self.tokens, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] < 1:
            raise ValidationError("token matrix must be (L >= 1, d_in)")
        golds = tuple((int(s), int(e)) for s, e in self.gold_spans)
        if not golds:
            raise ValidationError("at least one gold span required")
        for s, e in golds:
            if not (0 <= s <= e < mat.shape[0]):
                raise ValidationError(f"gold span ({s}, {e}) out of range")
        object.__setattr__(self, "tokens", mat)
        object.__setattr__(self, "gold_spans", golds)


@dataclass(frozen=True)
class SpanTask:
    task_id: str
    examples: tuple[SpanExample, ...]


def _class_accuracy(
    enc: EncoderParams, dec: DecoderParams, data: EmbeddingSet
) -> float:
    reps = encode(enc, data.vectors)
    probs = class_probabilities(dec, reps)
    pred_pos = np.argmax(probs, axis=1)
    ids = np.asarray(dec.class_ids, dtype=np.int64)
    return float(np.mean(ids[pred_pos] == data.labels.astype(np.int64)))


def _span_mean_f1(
    enc: EncoderParams, sd: SpanDecoderParams, task: SpanTask, max_span_len: int
) -> float:
    scores = []
    for ex in task.examples:
        reps = encode(enc, ex.tokens)
        sp, ep = span_scores(sd, reps)
        pred = predict_span(sp, ep, max_span_len)
        scores.append(span_f1(pred, ex.gold_spans))
    return float(np.mean(scores))


def train_probe(enc: EncoderParams, train_data, config: ProbeConfig):
    """Train a fresh one-layer decoder on the frozen encoder's outputs.

    Classification data is an EmbeddingSet with labels; the decoder
    covers exactly the classes present in it. Span data is a SpanTask.
    The encoder is read, never written. Early stop: training score
    improvement below 1e-4 for 3 consecutive epochs.
    """
    rng = np.random.Generator(np.random.PCG64(config.seed))
    if config.metric == "span_f1":
        if not isinstance(train_data, SpanTask):
            raise ValidationError("span_f1 probes train on a SpanTask")
        return _train_span_probe(enc, train_data, config, rng)
    if not isinstance(train_data, EmbeddingSet):
        raise ValidationError("accuracy probes train on an EmbeddingSet")
    if train_data.labels is None:
        raise ValidationError("probe training data must be labeled")
    class_ids = tuple(int(c) for c in np.unique(train_data.labels))
    dec = init_decoder(enc.d_rep, class_ids, seed=config.seed)
    if config.epochs == 0:
        return dec
    reps = encode(enc, train_data.vectors)  # encoder output, computed once
    pos_of = {cid: k for k, cid in enumerate(class_ids)}
    positions = np.array([pos_of[int(c)] for c in train_data.labels], dtype=np.int64)
    opt = AdamState(lr=config.learning_rate)
    cols = dec.columns
    n = reps.shape[0]
    best = -np.inf
    stall = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for k in range(0, n, config.batch_size):
            sel = order[k : k + config.batch_size]
            v = reps[sel]
            p = softmax(v @ cols)
            dlogits = p
            dlogits[np.arange(sel.size), positions[sel]] -= 1.0
            dlogits /= sel.size
            grads = {"dec.columns": v.T @ dlogits}
            cols = adam_step(opt, {"dec.columns": cols}, grads)["dec.columns"]
        pred = np.argmax(reps @ cols, axis=1)
        acc = float(np.mean(pred == positions))
        if acc > best + PLATEAU_DELTA:
            best = acc
            stall = 0
        else:
            stall += 1
            if stall >= PLATEAU_EPOCHS:
                break
    return DecoderParams(columns=cols, class_ids=class_ids)


def _train_span_probe(
    enc: EncoderParams, task: SpanTask, config: ProbeConfig, rng
) -> SpanDecoderParams:
    sd = init_span_decoder(enc.d_rep, seed=config.seed)
    if config.epochs == 0:
        return sd
    reps = [encode(enc, ex.tokens) for ex in task.examples]
    params = {"span.w_start": sd.w_start, "span.w_end": sd.w_end}
    opt = AdamState(lr=config.learning_rate)
    n = len(task.examples)
    best = -np.inf
    stall = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for i in order:
            ex = task.examples[int(i)]
            s, e = ex.gold_spans[0]  # first gold is the training target
            cur = SpanDecoderParams(
                w_start=params["span.w_start"], w_end=params["span.w_end"]
            )
            _, grads = span_loss_grads(cur, reps[int(i)], s, e)
            params = adam_step(opt, params, grads)
        cur = SpanDecoderParams(
            w_start=params["span.w_start"], w_end=params["span.w_end"]
        )
        score = 0.0
        for i in range(n):
            sp, ep = span_scores(cur, reps[i])
            pred = predict_span(sp, ep, config.max_span_len)
            score += span_f1(pred, task.examples[i].gold_spans)
        score /= n
        if score > best + PLATEAU_DELTA:
            best = score
            stall = 0
        else:
            stall += 1
            if stall >= PLATEAU_EPOCHS:
                break
    return SpanDecoderParams(w_start=params["span.w_start"], w_end=params["span.w_end"])


def evaluate_probe(
    enc: EncoderParams, decoder, test_data, metric: str, max_span_len: int = 30
) -> float:
    """Score a decoder on held-out data through the frozen encoder."""
    if metric == "accuracy":
        if not isinstance(test_data, EmbeddingSet) or test_data.labels is None:
            raise ValidationError("accuracy evaluation needs a labeled EmbeddingSet")
        if test_data.n == 0:
            raise EmptySetError("empty test set")
        return _class_accuracy(enc, decoder, test_data)
    if metric == "span_f1":
        if not isinstance(test_data, SpanTask):
            raise ValidationError("span_f1 evaluation needs a SpanTask")
        if not test_data.examples:
            raise EmptySetError("empty test set")
        return _span_mean_f1(enc, decoder, test_data, max_span_len)
    raise ValidationError(f"unknown metric {metric!r}")


@dataclass
class ProbeTimeline:
    """Per (checkpoint, task) probe and original-decoder scores."""

    rows: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def csv(self) -> str:
        lines = ["checkpoint_id,examples_seen,task_id,probe_score,original_score"]
        for r in self.rows:
            lines.append(
                f"{int(r['checkpoint_id'])},{int(r['examples_seen'])},"
                f"{r['task_id']},{repr(float(r['probe_score']))},"
                f"{repr(float(r['original_score']))}"
            )
        return "\n".join(lines) + "\n"

    def score(self, checkpoint_id: int, task_id: str, which: str = "probe_score"):
        for r in self.rows:
            if r["checkpoint_id"] == checkpoint_id and r["task_id"] == task_id:
                return r[which]
        raise KeyError((checkpoint_id, task_id))


def _original_score(model: Model, test_data, metric: str, max_span_len: int) -> float:
    if metric == "accuracy":
        return _class_accuracy(model.enc, model.dec, test_data)
    if model.span is None:
        raise ValidationError("checkpoint has no span decoder")
    return _span_mean_f1(model.enc, model.span, test_data, max_span_len)


def probe_timeline(
    run: RunLog, tasks: list[tuple[str, object, object]], config: ProbeConfig
) -> ProbeTimeline:
    """Probe every checkpoint of a run against every task.

    tasks: (task_id, train_data, test_data) triples. Each cell's probe
    seed derives from (config.seed, checkpoint index, task index), so a
    cell's result is independent of evaluation order.
    """
    timeline = ProbeTimeline(
        config={
            "epochs": config.epochs,
            "learning_rate": config.learning_rate,
            "batch_size": config.batch_size,
            "seed": config.seed,
            "metric": config.metric,
            "max_span_len": config.max_span_len,
        }
    )
    for ci, rec in enumerate(run.checkpoints):
        model, _, examples_seen = load_checkpoint(rec["path"])
        for ti, (task_id, train_data, test_data) in enumerate(tasks):
            cell_seed = int(
                np.random.SeedSequence((config.seed, ci, ti)).generate_state(1)[0]
            )
            cell_cfg = ProbeConfig(
                epochs=config.epochs,
                learning_rate=config.learning_rate,
                batch_size=config.batch_size,
                seed=cell_seed,
                metric=config.metric,
                max_span_len=config.max_span_len,
            )
            dec = train_probe(model.enc, train_data, cell_cfg)
            probe_score = evaluate_probe(
                model.enc, dec, test_data, config.metric, config.max_span_len
            )
            original = _original_score(model, test_data, config.metric, config.max_span_len)
            timeline.rows.append(
                {
                    "checkpoint_id": ci,
                    "examples_seen": int(examples_seen),
                    "task_id": task_id,
                    "probe_score": float(probe_score),
                    "original_score": float(original),
                }
            )
    return timeline
