"""Labeled embedding matrices and the EMBV1 binary interchange format.

An EmbeddingSet is the currency every other module trades in: one task
snapshot's representation vectors, optionally labeled with global class
ids.  Files store float32 little-endian payloads; everything in memory
is float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CorruptFileError,
    FormatError,
    MissingLabelsError,
    ValidationError,
)

MAGIC = b"EMBV0001"
_FLAG_LABELS = 0x1


@dataclass(frozen=True)
class EmbeddingSet:
    """One task snapshot: an n x d matrix of representation vectors.

    vectors are float64 in memory, row per example.  labels (if present)
    are global class ids drawn from class_space, which is the ordered
    list of ids valid for this task.
    """

    task_id: str
    vectors: np.ndarray
    labels: np.ndarray | None = None
    class_space: tuple[int, ...] = ()

    def __post_init__(self):
        vectors = np.ascontiguousarray(np.asarray(self.vectors, dtype=np.float64))
        if vectors.ndim != 2:
            raise ValidationError(f"vectors must be 2-D, got shape {vectors.shape}")
        if not np.all(np.isfinite(vectors)):
            raise ValidationError("vectors contain non-finite entries")
        zero_rows = np.flatnonzero(~np.any(vectors != 0.0, axis=1))
        if zero_rows.size:
            raise ValidationError(f"all-zero rows at indices {zero_rows[:5].tolist()}")
        labels = self.labels
        if labels is not None:
            labels = np.ascontiguousarray(np.asarray(labels, dtype=np.uint32))
            if labels.shape != (vectors.shape[0],):
                raise ValidationError(
                    f"label count {labels.shape} does not match {vectors.shape[0]} rows"
                )
            space = set(self.class_space)
            bad = [int(l) for l in labels if int(l) not in space]
            if bad:
                raise ValidationError(f"labels outside class_space: {sorted(set(bad))[:5]}")
            labels.setflags(write=False)
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_space", tuple(int(c) for c in self.class_space))

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class ClassView:
    """The rows of a parent set that carry one class label."""

    parent: EmbeddingSet
    class_id: int
    row_indices: np.ndarray = field(repr=False)

    def __post_init__(self):
        idx = np.asarray(self.row_indices, dtype=np.int64)
        if idx.size and not np.all(np.diff(idx) > 0):
            raise ValidationError("row_indices must be strictly increasing")
        if self.parent.labels is None:
            raise MissingLabelsError("parent set has no labels")
        if idx.size and not np.all(self.parent.labels[idx] == self.class_id):
            raise ValidationError("row_indices reference rows of a different class")
        idx.setflags(write=False)
        object.__setattr__(self, "row_indices", idx)

    @property
    def vectors(self) -> np.ndarray:
        return self.parent.vectors[self.row_indices]

    def __len__(self) -> int:
        return int(self.row_indices.size)


def save_embeddings(path, emb: EmbeddingSet) -> None:
    """Write an EmbeddingSet as an EMBV1 file (f32 LE payload, no padding)."""
    task = emb.task_id.encode("utf-8")
    if len(task) > 0xFFFF:
        raise ValidationError("task_id longer than 65535 UTF-8 bytes")
    parts = [
        MAGIC,
        struct.pack("<QI", emb.n, emb.d),
        struct.pack("<I", _FLAG_LABELS if emb.labels is not None else 0),
        struct.pack("<H", len(task)),
        task,
        struct.pack("<I", len(emb.class_space)),
        np.asarray(emb.class_space, dtype="<u4").tobytes(),
        emb.vectors.astype("<f4").tobytes(order="C"),
    ]
    if emb.labels is not None:
        parts.append(emb.labels.astype("<u4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, count: int, what: str) -> bytes:
        if self.pos + count > len(self.buf):
            raise CorruptFileError(
                f"truncated file: needed {count} bytes for {what} at offset {self.pos}, "
                f"file has {len(self.buf)}"
            )
        out = self.buf[self.pos : self.pos + count]
        self.pos += count
        return out


def load_embeddings(path) -> EmbeddingSet:
    """Read an EMBV1 file, validating every declared invariant."""
    with open(path, "rb") as fh:
        buf = fh.read()
    r = _Reader(buf)
    if len(buf) < len(MAGIC) or buf[: len(MAGIC)] != MAGIC:
        raise FormatError(f"bad magic {buf[:8]!r}, expected {MAGIC!r}")
    r.pos = len(MAGIC)
    n, d = struct.unpack("<QI", r.take(12, "n/d header"))
    (flags,) = struct.unpack("<I", r.take(4, "flags"))
    if flags & ~_FLAG_LABELS:
        raise FormatError(f"unknown flag bits 0x{flags:x}")
    (task_len,) = struct.unpack("<H", r.take(2, "task_id length"))
    try:
        task_id = r.take(task_len, "task_id").decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptFileError(f"task_id is not valid UTF-8: {exc}") from None
    (n_classes,) = struct.unpack("<I", r.take(4, "class_space count"))
    class_space = np.frombuffer(r.take(4 * n_classes, "class_space"), dtype="<u4")
    if d == 0:
        raise CorruptFileError("dimension d must be positive")
    mat_bytes = n * d * 4
    matrix = np.frombuffer(r.take(mat_bytes, "matrix"), dtype="<f4").reshape(n, d)
    labels = None
    if flags & _FLAG_LABELS:
        labels = np.frombuffer(r.take(4 * n, "labels"), dtype="<u4")
    if r.pos != len(buf):
        raise CorruptFileError(f"{len(buf) - r.pos} trailing bytes after payload")
    return EmbeddingSet(
        task_id=task_id,
        vectors=matrix.astype(np.float64),
        labels=labels,
        class_space=tuple(int(c) for c in class_space),
    )


def split_by_class(emb: EmbeddingSet) -> list[ClassView]:
    """Partition labeled rows into one ClassView per occurring class id.

    Views are ordered by ascending class id and together cover every row.
    """
    if emb.labels is None:
        raise MissingLabelsError("split_by_class requires labels")
    views = []
    for cid in np.unique(emb.labels):
        idx = np.flatnonzero(emb.labels == cid)
        views.append(ClassView(parent=emb, class_id=int(cid), row_indices=idx))
    return views
