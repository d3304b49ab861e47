"""Shared fixture: a tiny local encoder whose states cluster by topic.

Built once per session, no network. The two content vocabularies get
word embeddings around orthogonal directions, and the attention value
paths are scaled up so the first-token state follows sentence content
instead of its own constant residual stream. That gives pooled vectors
a real class geometry for the conformance tests to transport.
"""

import os

import numpy as np
import pytest
import torch
from transformers import BertConfig, BertModel, BertTokenizer

COLORS = ["red", "blue", "green", "crimson", "scarlet", "azure"]
MACHINES = ["engine", "wheel", "brake", "gear", "piston", "clutch"]
FILL = ["the", "a", "is", "was", "very"]

HIDDEN = 32


def build_model_dir(root, seed=0, value_scale=10.0):
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + COLORS + MACHINES + FILL
    vocab_path = os.path.join(root, "vocab.txt")
    with open(vocab_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(vocab) + "\n")
    tok = BertTokenizer(vocab_path, do_lower_case=True)
    cfg = BertConfig(
        vocab_size=len(vocab),
        hidden_size=HIDDEN,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=2 * HIDDEN,
        max_position_embeddings=64,
    )
    torch.manual_seed(seed)
    model = BertModel(cfg)
    with torch.no_grad():
        emb = model.embeddings.word_embeddings.weight
        gen = torch.Generator().manual_seed(seed + 1)
        axis_a = torch.zeros(HIDDEN)
        axis_a[0] = 3.0
        axis_b = torch.zeros(HIDDEN)
        axis_b[1] = 3.0
        for words, center in ((COLORS, axis_a), (MACHINES, axis_b)):
            for word in words:
                tid = tok.convert_tokens_to_ids(word)
                emb[tid] = center + 0.1 * torch.randn(HIDDEN, generator=gen)
        # untrained attention barely moves the first token; widen the value
        # paths so its state is dominated by context, not by its residual
        for layer in model.encoder.layer:
            layer.attention.self.value.weight.mul_(value_scale)
            layer.attention.output.dense.weight.mul_(value_scale)
    out = os.path.join(root, "model")
    model.save_pretrained(out)
    tok.save_pretrained(out)
    return out


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory):
    return build_model_dir(str(tmp_path_factory.mktemp("tinybert")))


def two_class_lines(seed, per_class=50):
    """label<TAB>text lines: class 0 talks colors, class 1 machinery."""
    rng = np.random.Generator(np.random.PCG64(seed))

    def sentence(words):
        k = int(rng.integers(3, 7))
        picks = [
            str(rng.choice(FILL)) if rng.random() < 0.3 else str(rng.choice(words))
            for _ in range(k)
        ]
        return " ".join(picks)

    lines = [f"0\t{sentence(COLORS)}" for _ in range(per_class)]
    lines += [f"1\t{sentence(MACHINES)}" for _ in range(per_class)]
    return lines


@pytest.fixture
def two_class_sample():
    return two_class_lines(seed=5, per_class=50)
