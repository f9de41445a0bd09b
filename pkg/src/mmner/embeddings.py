"""Embedding tables, pretrained-vector loading, and windowed input assembly."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Sentence, Vocab

UNK_INDEX = 0
PAD_INDEX = 1

FALLBACK_SCALE = 0.1


class EmbeddingFormatError(Exception):
    """Malformed pretrained embedding file."""


@dataclass
class EmbeddingTable:
    """Dense lookup table. Row 0 is the unknown symbol, row 1 padding."""

    dim: int
    vectors: np.ndarray
    trainable: bool = True

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[1] != self.dim:
            raise ValueError("vector block must be (size, dim)")
        if self.vectors.shape[0] < 2:
            raise ValueError("table must contain the unknown and padding rows")

    @property
    def size(self) -> int:
        return self.vectors.shape[0]


def random_table(size: int, dim: int, rng: np.random.Generator, scale: float = FALLBACK_SCALE) -> EmbeddingTable:
    """Fresh table with uniform entries in [-scale, scale]; padding row is zero."""
    vectors = rng.uniform(-scale, scale, size=(size, dim))
    vectors[PAD_INDEX] = 0.0
    return EmbeddingTable(dim, vectors)


def load_pretrained(text, vocab: Vocab, dim: int, rng: np.random.Generator) -> EmbeddingTable:
    """Load word vectors in the plain text format "<word> v1 ... v_dim".

    An optional first line "<count> <dim>" (two integer fields) is skipped.
    Vocabulary words found in the file get the file vector; absent words keep
    the fallback initialization of :func:`random_table`. The unknown row
    becomes the mean of every vector parsed from the file (zero when the file
    holds none).
    """
    if isinstance(text, str):
        lines = text.splitlines()
    else:
        lines = [line.rstrip("\n") for line in text]

    table = random_table(len(vocab), dim, rng)
    total = np.zeros(dim)
    n_read = 0

    start = 0
    if lines:
        head = lines[0].split()
        if len(head) == 2:
            try:
                int(head[0]), int(head[1])
                start = 1
            except ValueError:
                pass

    for lineno, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        fields = line.split()
        word, components = fields[0], fields[1:]
        if len(components) != dim:
            raise EmbeddingFormatError(
                f"line {lineno}: expected {dim} components, got {len(components)}"
            )
        try:
            vec = np.array([float(x) for x in components])
        except ValueError:
            raise EmbeddingFormatError(f"line {lineno}: non-numeric component") from None
        total += vec
        n_read += 1
        idx = vocab.index(word)
        if idx > PAD_INDEX:
            table.vectors[idx] = vec

    table.vectors[UNK_INDEX] = total / n_read if n_read else 0.0
    return table


@dataclass
class InputAssembly:
    """Recipe for per-position input vectors.

    Position t gets the token embeddings of the window around t (padding
    beyond the sentence ends) followed by one feature embedding per slot.
    Slots may share a table: ``slot_tables[s]`` indexes ``feature_tables``.
    """

    window: int
    token_table: EmbeddingTable
    feature_tables: list[EmbeddingTable]
    slot_tables: list[int]

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be a positive odd count")

    @property
    def width(self) -> int:
        feat = sum(self.feature_tables[i].dim for i in self.slot_tables)
        return self.window * self.token_table.dim + feat


def assemble_window(sentence: Sentence, assembly: InputAssembly) -> np.ndarray:
    """Per-position input matrix of shape (len(sentence), assembly.width)."""
    if sentence.token_ids is None:
        raise ValueError("sentence tokens not mapped to indices")
    n = len(sentence)
    half = (assembly.window - 1) // 2
    padded = np.array([PAD_INDEX] * half + list(sentence.token_ids) + [PAD_INDEX] * half)
    rows = assembly.token_table.vectors[padded]
    parts = [rows[k:k + n] for k in range(assembly.window)]
    for s, table_idx in enumerate(assembly.slot_tables):
        table = assembly.feature_tables[table_idx]
        ids = np.array([feat[s] for feat in sentence.features])
        parts.append(table.vectors[ids])
    return np.concatenate(parts, axis=1)


def assembly_backward(
    d_inputs: np.ndarray, sentence: Sentence, assembly: InputAssembly
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Scatter input-matrix gradients back onto the embedding tables.

    Returns (token table gradient, per-table feature gradients), full-shape.
    """
    n = len(sentence)
    d_tok = np.zeros_like(assembly.token_table.vectors)
    half = (assembly.window - 1) // 2
    padded = np.array([PAD_INDEX] * half + list(sentence.token_ids) + [PAD_INDEX] * half)
    dim = assembly.token_table.dim
    for k in range(assembly.window):
        np.add.at(d_tok, padded[k:k + n], d_inputs[:, k * dim:(k + 1) * dim])
    d_feats = [np.zeros_like(t.vectors) for t in assembly.feature_tables]
    offset = assembly.window * dim
    for s, table_idx in enumerate(assembly.slot_tables):
        fdim = assembly.feature_tables[table_idx].dim
        ids = np.array([feat[s] for feat in sentence.features])
        np.add.at(d_feats[table_idx], ids, d_inputs[:, offset:offset + fdim])
        offset += fdim
    return d_tok, d_feats
