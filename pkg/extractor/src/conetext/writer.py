"""Standalone writer for the EMBV1 embedding container.

Layout, all little-endian, no padding:

    8 bytes   magic "EMBV0001"
    u64       n rows
    u32       d columns
    u32       flags (bit 0: label block present)
    u16       task_id byte length, then that many UTF-8 bytes
    u32       class count, then that many u32 class ids
    n*d f32   row-major vector payload
    n u32     labels (only when flagged)

The file is written to a temporary sibling and renamed into place, so
readers never observe a partial file.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .errors import ValidationError

MAGIC = b"EMBV0001"
_FLAG_LABELS = 0x1


def write_embv1(path, task_id: str, vectors, labels=None, class_space=None) -> None:
    """Serialize one task's vectors (and optional labels) atomically."""
    mat = np.ascontiguousarray(vectors, dtype=np.float32)
    if mat.ndim != 2 or mat.shape[0] < 1:
        raise ValidationError(f"vectors must be a nonempty 2-D matrix, got {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise ValidationError("vectors contain non-finite entries")
    if not mat.any(axis=1).all():
        raise ValidationError("all-zero rows are not representable")
    task = task_id.encode("utf-8")
    if len(task) > 0xFFFF:
        raise ValidationError("task_id longer than 65535 UTF-8 bytes")
    lab = None
    if labels is not None:
        lab = np.asarray(labels)
        if lab.shape != (mat.shape[0],):
            raise ValidationError(
                f"label count {lab.shape} does not match {mat.shape[0]} rows"
            )
        if np.any(lab < 0) or np.any(lab > 0xFFFFFFFF):
            raise ValidationError("labels must fit an unsigned 32-bit integer")
        lab = lab.astype("<u4")
    if class_space is None:
        space = sorted(set(int(c) for c in lab)) if lab is not None else []
    else:
        space = [int(c) for c in class_space]
        if len(set(space)) != len(space):
            raise ValidationError("duplicate ids in class_space")
        if lab is not None and not set(int(c) for c in lab) <= set(space):
            raise ValidationError("labels outside class_space")
    parts = [
        MAGIC,
        struct.pack("<QI", mat.shape[0], mat.shape[1]),
        struct.pack("<I", _FLAG_LABELS if lab is not None else 0),
        struct.pack("<H", len(task)),
        task,
        struct.pack("<I", len(space)),
        np.asarray(space, dtype="<u4").tobytes(),
        mat.astype("<f4").tobytes(order="C"),
    ]
    if lab is not None:
        parts.append(lab.tobytes())
    blob = b"".join(parts)
    out_dir = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=out_dir, suffix=".embv1.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
