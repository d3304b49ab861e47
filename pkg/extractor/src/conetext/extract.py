"""Pooled-representation extraction from pretrained transformer encoders.

Reads `label<TAB>text` lines, runs them through a frozen model, pools
each example's chosen hidden layer, and writes one EMBV1 file whose row
order is exactly the input order. Inference only: no gradients, no
parameter updates.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import InputFormatError, ModelLoadError, ValidationError
from .writer import write_embv1

POOLING_MODES = ("first", "tokens")


@dataclass(frozen=True)
class ExtractionSpec:
    """Everything one extraction run needs.

    pooling "first" emits one row per input line: the hidden state of
    the sequence's first token at the chosen layer. pooling "tokens"
    emits one row per non-special, non-padding token, examples
    concatenated in input order, each token row carrying its example's
    label. layer indexes the hidden-state stack (0 is the embedding
    layer, -1 the last encoder layer).
    """

    model: str
    input_path: str
    output_path: str
    pooling: str = "first"
    layer: int = -1
    max_length: int = 128
    batch_size: int = 32
    task_id: str | None = None

    def __post_init__(self):
        if self.pooling not in POOLING_MODES:
            raise ValidationError(
                f"pooling must be one of {POOLING_MODES}, got {self.pooling!r}"
            )
        if self.max_length < 1:
            raise ValidationError("max_length must be positive")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be positive")

    @property
    def effective_task_id(self) -> str:
        if self.task_id is not None:
            return self.task_id
        stem = os.path.basename(self.input_path)
        return stem.rsplit(".", 1)[0] if "." in stem else stem


def read_labeled_lines(path) -> tuple[list[int], list[str]]:
    """Parse `label<TAB>text` lines; malformed lines name their number."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.read()
    lines = raw.split("\n")
    if lines and lines[-1] == "":
        lines.pop()  # trailing newline, not an empty record
    if not lines:
        raise InputFormatError(f"{path} is empty")
    labels: list[int] = []
    texts: list[str] = []
    for num, line in enumerate(lines, start=1):
        if "\t" not in line:
            raise InputFormatError(
                f"line {num}: expected 'label<TAB>text', no tab found"
            )
        head, text = line.split("\t", 1)
        try:
            label = int(head)
        except ValueError:
            raise InputFormatError(
                f"line {num}: label {head!r} is not an integer"
            ) from None
        if label < 0:
            raise InputFormatError(f"line {num}: label must be non-negative")
        if not text.strip():
            raise InputFormatError(f"line {num}: empty text")
        labels.append(label)
        texts.append(text)
    return labels, texts


def _load_model(name: str):
    import torch
    from transformers import AutoModel, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(name)
        model = AutoModel.from_pretrained(name)
    except Exception as exc:
        raise ModelLoadError(f"cannot load model {name!r}: {exc}") from exc
    model.eval()
    torch.set_grad_enabled(False)
    return tokenizer, model


def _pool_batch(spec: ExtractionSpec, tokenizer, model, texts: list[str]):
    """Return (rows, tokens_per_example) for one batch."""
    import torch

    enc = tokenizer(
        texts,
        truncation=True,
        max_length=spec.max_length,
        padding=True,
        return_tensors="pt",
        return_special_tokens_mask=True,
    )
    special = enc.pop("special_tokens_mask")
    with torch.no_grad():
        out = model(**enc, output_hidden_states=True)
    hidden = out.hidden_states[spec.layer]
    if spec.pooling == "first":
        rows = hidden[:, 0, :].cpu().numpy().astype(np.float32)
        return rows, [1] * len(texts)
    keep = enc["attention_mask"].bool() & ~special.bool()
    rows = []
    counts = []
    for i in range(hidden.shape[0]):
        sel = hidden[i][keep[i]]
        rows.append(sel.cpu().numpy().astype(np.float32))
        counts.append(int(sel.shape[0]))
    return np.concatenate(rows, axis=0), counts


def extract(spec: ExtractionSpec) -> dict:
    """Run one extraction and write its EMBV1 file atomically.

    Returns a small summary: rows written, dimension, classes seen.
    """
    labels, texts = read_labeled_lines(spec.input_path)
    tokenizer, model = _load_model(spec.model)
    chunks = []
    row_labels: list[int] = []
    for k in range(0, len(texts), spec.batch_size):
        batch_texts = texts[k : k + spec.batch_size]
        rows, counts = _pool_batch(spec, tokenizer, model, batch_texts)
        chunks.append(rows)
        for label, count in zip(labels[k : k + spec.batch_size], counts):
            row_labels.extend([label] * count)
    mat = np.concatenate(chunks, axis=0)
    write_embv1(
        spec.output_path,
        spec.effective_task_id,
        mat,
        labels=np.asarray(row_labels, dtype=np.uint32),
    )
    return {
        "rows": int(mat.shape[0]),
        "dimension": int(mat.shape[1]),
        "examples": len(texts),
        "classes": sorted(set(labels)),
        "output": str(spec.output_path),
    }
