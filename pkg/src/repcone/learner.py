"""Trainable model: small encoder, shared class decoder, span decoders.

Everything is plain numpy with explicit gradients. The encoder is a
two-layer feed-forward map d_in -> hidden -> d_rep with a smooth
nonlinearity; the class decoder is one column per class with no bias;
span decoders score token positions for extractive QA.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    CheckpointError,
    DimensionError,
    NonFiniteGradientError,
    ValidationError,
)

CKPT_MAGIC = b"CKPT0001"
_ACTIVATIONS = ("tanh", "identity")
PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class EncoderParams:
    w1: np.ndarray  # (h, d_in)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (d_rep, h)
    b2: np.ndarray  # (d_rep,)
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}")
        for name in ("w1", "b1", "w2", "b2"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"non-finite entries in {name}")
            object.__setattr__(self, name, arr)
        h, d_in = self.w1.shape
        d_rep, h2 = self.w2.shape
        if self.b1.shape != (h,) or h2 != h or self.b2.shape != (d_rep,):
            raise DimensionError("inconsistent encoder shapes")

    @property
    def d_in(self) -> int:
        return self.w1.shape[1]

    @property
    def d_rep(self) -> int:
        return self.w2.shape[0]


@dataclass(frozen=True)
class DecoderParams:
    """Shared decoder: one column per class, logit = column . v."""

    columns: np.ndarray  # (d_rep, C)
    class_ids: tuple[int, ...]

    def __post_init__(self):
        cols = np.ascontiguousarray(self.columns, dtype=np.float64)
        if cols.ndim != 2:
            raise DimensionError("decoder columns must be a (d_rep, C) matrix")
        if not np.all(np.isfinite(cols)):
            raise ValidationError("non-finite decoder columns")
        ids = tuple(int(c) for c in self.class_ids)
        if len(ids) != cols.shape[1]:
            raise DimensionError("one class id per decoder column required")
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate class ids in decoder")
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "class_ids", ids)

    @property
    def n_classes(self) -> int:
        return self.columns.shape[1]

    def position_of(self, class_id: int) -> int:
        try:
            return self.class_ids.index(int(class_id))
        except ValueError:
            raise ValidationError(f"class {class_id} not in decoder") from None


@dataclass(frozen=True)
class SpanDecoderParams:
    w_start: np.ndarray
    w_end: np.ndarray

    def __post_init__(self):
        for name in ("w_start", "w_end"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 1 or not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} must be a finite vector")
            object.__setattr__(self, name, arr)
        if self.w_start.shape != self.w_end.shape:
            raise DimensionError("w_start and w_end must share a dimension")


def init_encoder(
    d_in: int, hidden: int, d_rep: int, activation: str = "tanh", seed: int = 0
) -> EncoderParams:
    """Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero."""
    rng = np.random.Generator(np.random.PCG64(seed))
    s1 = 1.0 / np.sqrt(d_in)
    s2 = 1.0 / np.sqrt(hidden)
    return EncoderParams(
        w1=rng.uniform(-s1, s1, size=(hidden, d_in)),
        b1=np.zeros(hidden),
        w2=rng.uniform(-s2, s2, size=(d_rep, hidden)),
        b2=np.zeros(d_rep),
        activation=activation,
    )


def init_decoder(d_rep: int, class_ids, seed: int = 0) -> DecoderParams:
    rng = np.random.Generator(np.random.PCG64(seed))
    ids = tuple(int(c) for c in class_ids)
    s = 1.0 / np.sqrt(d_rep)
    return DecoderParams(
        columns=rng.uniform(-s, s, size=(d_rep, len(ids))), class_ids=ids
    )


def init_span_decoder(d_rep: int, seed: int = 0) -> SpanDecoderParams:
    rng = np.random.Generator(np.random.PCG64(seed))
    s = 1.0 / np.sqrt(d_rep)
    return SpanDecoderParams(
        w_start=rng.uniform(-s, s, size=d_rep), w_end=rng.uniform(-s, s, size=d_rep)
    )


def _activate(pre: np.ndarray, activation: str) -> np.ndarray:
    return np.tanh(pre) if activation == "tanh" else pre


def encode(enc: EncoderParams, x: np.ndarray) -> np.ndarray:
    """Forward pass; accepts one vector (d_in,) or a batch (n, d_in)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != enc.d_in:
        raise DimensionError(f"input dim {x.shape[-1]} != encoder d_in {enc.d_in}")
    a1 = _activate(x @ enc.w1.T + enc.b1, enc.activation)
    v = a1 @ enc.w2.T + enc.b2
    return v[0] if single else v


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Stable softmax with max-subtraction."""
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def class_probabilities(dec: DecoderParams, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    single = v.ndim == 1
    if single:
        v = v[None, :]
    if v.shape[1] != dec.columns.shape[0]:
        raise DimensionError(
            f"representation dim {v.shape[1]} != decoder dim {dec.columns.shape[0]}"
        )
    p = softmax(v @ dec.columns)
    return p[0] if single else p


def nll_loss(probs: np.ndarray, positions: np.ndarray) -> float:
    """Mean -ln p(true class); positions index prob columns."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim == 1:
        probs = probs[None, :]
    positions = np.atleast_1d(np.asarray(positions, dtype=np.int64))
    if positions.shape[0] != probs.shape[0]:
        raise DimensionError("one label position per prob row required")
    picked = probs[np.arange(probs.shape[0]), positions]
    if np.any(picked < PROB_FLOOR):
        warnings.warn("probability clamped at 1e-300 inside nll_loss", RuntimeWarning)
        picked = np.maximum(picked, PROB_FLOOR)
    return float(-np.log(picked).mean())


def span_scores(
    sd: SpanDecoderParams, token_reprs: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Softmax start/end distributions over an L x d_rep token matrix."""
    mat = np.asarray(token_reprs, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] < 1:
        raise ValidationError("token matrix must be (L >= 1, d_rep)")
    if mat.shape[1] != sd.w_start.shape[0]:
        raise DimensionError("token dim does not match span decoder")
    return softmax(mat @ sd.w_start), softmax(mat @ sd.w_end)


def predict_span(
    start_probs: np.ndarray, end_probs: np.ndarray, max_len: int
) -> tuple[int, int]:
    """Best (s, e) with s <= e <= s + max_len - 1 under independent boundaries.

    Ties resolve to the smallest s, then smallest e.
    """
    sp = np.asarray(start_probs, dtype=np.float64)
    ep = np.asarray(end_probs, dtype=np.float64)
    if max_len < 1:
        raise ValidationError("max_len must be >= 1")
    length = sp.shape[0]
    scores = np.outer(sp, ep)
    rows = np.arange(length)[:, None]
    cols = np.arange(length)[None, :]
    scores[(cols < rows) | (cols > rows + max_len - 1)] = -np.inf
    flat = int(np.argmax(scores))  # row-major argmax = smallest s then e on ties
    return flat // length, flat % length


def span_f1(pred: tuple[int, int], golds) -> float:
    """Token-overlap F1, maximum over gold spans."""
    ps, pe = int(pred[0]), int(pred[1])
    if pe < ps:
        raise ValidationError("span end before start")
    pred_tokens = set(range(ps, pe + 1))
    best = 0.0
    for gs, ge in golds:
        gs, ge = int(gs), int(ge)
        if ge < gs:
            raise ValidationError("gold span end before start")
        gold_tokens = set(range(gs, ge + 1))
        overlap = len(pred_tokens & gold_tokens)
        if overlap == 0:
            continue
        precision = overlap / len(pred_tokens)
        recall = overlap / len(gold_tokens)
        best = max(best, 2 * precision * recall / (precision + recall))
    return best


class AdamState:
    """Bias-corrected Adam over a dict of named parameter arrays."""

    def __init__(self, lr=3e-5, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0 or not (0 <= beta1 < 1) or not (0 <= beta2 < 1) or eps <= 0:
            raise ValidationError("bad Adam hyperparameters")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}


def adam_step(
    state: AdamState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]
) -> dict[str, np.ndarray]:
    """One Adam update; rejects the whole step on any non-finite gradient."""
    for name, g in grads.items():
        if name not in params:
            raise ValidationError(f"gradient for unknown parameter {name!r}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient for {name!r}")
        if np.shape(g) != np.shape(params[name]):
            raise DimensionError(f"gradient shape mismatch for {name!r}")
    state.t += 1
    t = state.t
    out = dict(params)
    for name, g in grads.items():
        g = np.asarray(g, dtype=np.float64)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(g)
            v = np.zeros_like(g)
        m = state.beta1 * m + (1 - state.beta1) * g
        v = state.beta2 * v + (1 - state.beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        m_hat = m / (1 - state.beta1**t)
        v_hat = v / (1 - state.beta2**t)
        out[name] = params[name] - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return out


def _class_loss_grads(
    enc: EncoderParams, dec: DecoderParams, x: np.ndarray, positions: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    positions = np.atleast_1d(np.asarray(positions, dtype=np.int64))
    n = x.shape[0]
    if positions.shape[0] != n:
        raise DimensionError("one label per input row required")
    pre1 = x @ enc.w1.T + enc.b1
    a1 = _activate(pre1, enc.activation)
    v = a1 @ enc.w2.T + enc.b2
    p = softmax(v @ dec.columns)
    loss = nll_loss(p, positions)
    dlogits = p.copy()
    dlogits[np.arange(n), positions] -= 1.0
    dlogits /= n
    d_cols = v.T @ dlogits
    dv = dlogits @ dec.columns.T
    dw2 = dv.T @ a1
    db2 = dv.sum(axis=0)
    da1 = dv @ enc.w2
    dpre1 = da1 * (1.0 - a1 * a1) if enc.activation == "tanh" else da1
    dw1 = dpre1.T @ x
    db1 = dpre1.sum(axis=0)
    grads = {
        "enc.w1": dw1,
        "enc.b1": db1,
        "enc.w2": dw2,
        "enc.b2": db2,
        "dec.columns": d_cols,
    }
    return loss, grads


def backward(
    enc: EncoderParams, dec: DecoderParams, x: np.ndarray, positions: np.ndarray
) -> dict[str, np.ndarray]:
    """Exact gradients of the mean NLL for a batch, keyed by parameter name."""
    return _class_loss_grads(enc, dec, x, positions)[1]


def class_loss(
    enc: EncoderParams, dec: DecoderParams, x: np.ndarray, positions: np.ndarray
) -> float:
    return _class_loss_grads(enc, dec, x, positions)[0]


def span_loss_grads(
    sd: SpanDecoderParams, token_reprs: np.ndarray, start: int, end: int
) -> tuple[float, dict[str, np.ndarray]]:
    """NLL of one gold (start, end) pair and its span-decoder gradients."""
    mat = np.asarray(token_reprs, dtype=np.float64)
    sp, ep = span_scores(sd, mat)
    length = mat.shape[0]
    if not (0 <= start < length and 0 <= end < length):
        raise ValidationError("gold span out of range")
    loss = -float(np.log(max(sp[start], PROB_FLOOR)) + np.log(max(ep[end], PROB_FLOOR)))
    ds = sp.copy()
    ds[start] -= 1.0
    de = ep.copy()
    de[end] -= 1.0
    return loss, {"span.w_start": mat.T @ ds, "span.w_end": mat.T @ de}


# --- parameter dict plumbing -------------------------------------------------


@dataclass(frozen=True)
class Model:
    """Bundle of encoder + class decoder (+ optional span decoders)."""

    enc: EncoderParams
    dec: DecoderParams
    span: SpanDecoderParams | None = None

    def params(self) -> dict[str, np.ndarray]:
        out = {
            "enc.w1": self.enc.w1,
            "enc.b1": self.enc.b1,
            "enc.w2": self.enc.w2,
            "enc.b2": self.enc.b2,
            "dec.columns": self.dec.columns,
        }
        if self.span is not None:
            out["span.w_start"] = self.span.w_start
            out["span.w_end"] = self.span.w_end
        return out

    def with_params(self, params: dict[str, np.ndarray]) -> "Model":
        enc = EncoderParams(
            w1=params["enc.w1"],
            b1=params["enc.b1"],
            w2=params["enc.w2"],
            b2=params["enc.b2"],
            activation=self.enc.activation,
        )
        dec = DecoderParams(columns=params["dec.columns"], class_ids=self.dec.class_ids)
        span = self.span
        if span is not None:
            span = SpanDecoderParams(
                w_start=params["span.w_start"], w_end=params["span.w_end"]
            )
        return Model(enc=enc, dec=dec, span=span)


# --- checkpoint file format ---------------------------------------------------
#
# magic "CKPT0001"
# u64 step, u64 examples_seen
# u32 tensor count, then per tensor:
#   u16 name length, UTF-8 name, u8 ndim, ndim * u32 dims, u64 payload offset
# payloads: little-endian f32, C order, at their stated offsets


def _meta_tensors(model: Model) -> dict[str, np.ndarray]:
    return {
        "meta.class_space": np.asarray(model.dec.class_ids, dtype=np.float64),
        "meta.activation_code": np.asarray(
            [_ACTIVATIONS.index(model.enc.activation)], dtype=np.float64
        ),
    }


def save_checkpoint(path, model: Model, step: int, examples_seen: int) -> None:
    tensors = dict(model.params())
    tensors.update(_meta_tensors(model))
    names = sorted(tensors)
    header = bytearray()
    header += CKPT_MAGIC
    header += struct.pack("<QQ", int(step), int(examples_seen))
    header += struct.pack("<I", len(names))
    payloads = []
    offset = 0
    for name in names:
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        nb = name.encode("utf-8")
        header += struct.pack("<H", len(nb)) + nb
        header += struct.pack("<B", arr.ndim)
        for dim in arr.shape:
            header += struct.pack("<I", dim)
        header += struct.pack("<Q", offset)
        payloads.append(arr.tobytes())
        offset += len(payloads[-1])
    with open(path, "wb") as fh:
        fh.write(bytes(header))
        for chunk in payloads:
            fh.write(chunk)


def load_checkpoint(path) -> tuple[Model, int, int]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise CheckpointError(f"bad checkpoint magic in {path}")
    pos = len(CKPT_MAGIC)

    def take(count: int, what: str) -> bytes:
        nonlocal pos
        if pos + count > len(blob):
            raise CheckpointError(f"truncated checkpoint while reading {what}")
        chunk = blob[pos : pos + count]
        pos += count
        return chunk

    step, examples_seen = struct.unpack("<QQ", take(16, "counters"))
    (count,) = struct.unpack("<I", take(4, "tensor count"))
    entries = []
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        name = take(name_len, "tensor name").decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1, "ndim"))
        shape = tuple(
            struct.unpack("<I", take(4, "dim"))[0] for _ in range(ndim)
        )
        (offset,) = struct.unpack("<Q", take(8, "offset"))
        entries.append((name, shape, offset))
    payload = blob[pos:]
    tensors: dict[str, np.ndarray] = {}
    for name, shape, offset in entries:
        n_items = int(np.prod(shape, dtype=np.int64)) if shape else 1
        end = offset + 4 * n_items
        if end > len(payload):
            raise CheckpointError(f"payload for {name!r} exceeds file size")
        arr = np.frombuffer(payload, dtype="<f4", count=n_items, offset=offset)
        tensors[name] = arr.reshape(shape).astype(np.float64)
    required = {
        "enc.w1",
        "enc.b1",
        "enc.w2",
        "enc.b2",
        "dec.columns",
        "meta.class_space",
        "meta.activation_code",
    }
    missing = required - tensors.keys()
    if missing:
        raise CheckpointError(f"checkpoint missing tensors: {sorted(missing)}")
    code = int(tensors["meta.activation_code"][0])
    if code not in (0, 1):
        raise CheckpointError(f"unknown activation code {code}")
    enc = EncoderParams(
        w1=tensors["enc.w1"],
        b1=tensors["enc.b1"],
        w2=tensors["enc.w2"],
        b2=tensors["enc.b2"],
        activation=_ACTIVATIONS[code],
    )
    class_ids = tuple(int(c) for c in tensors["meta.class_space"])
    dec = DecoderParams(columns=tensors["dec.columns"], class_ids=class_ids)
    span = None
    if "span.w_start" in tensors and "span.w_end" in tensors:
        span = SpanDecoderParams(
            w_start=tensors["span.w_start"], w_end=tensors["span.w_end"]
        )
    return Model(enc=enc, dec=dec, span=span), int(step), int(examples_seen)
