"""Token/POS vocabularies and pretrained word-vector loading."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, UsageError
from .extraction import MARKER
from .rng import Rng

UNK = "<unk>"
PAD = "<pad>"


def _ordered(counts: Counter, min_count: int) -> list:
    kept = [t for t, c in counts.items() if c >= min_count]
    return sorted(kept, key=lambda t: (-counts[t], t))


@dataclass
class Vocab:
    tokens: list
    pos_tags: list

    def __post_init__(self):
        self.token_to_id = {t: i for i, t in enumerate(self.tokens)}
        self.pos_to_id = {t: i for i, t in enumerate(self.pos_tags)}
        if len(self.token_to_id) != len(self.tokens):
            raise UsageError("duplicate tokens in vocabulary")
        if len(self.pos_to_id) != len(self.pos_tags):
            raise UsageError("duplicate POS tags in vocabulary")

    def __len__(self):
        return len(self.tokens)

    @property
    def marker_id(self):
        return self.token_to_id[MARKER]

    @property
    def unk_id(self):
        return self.token_to_id[UNK]

    @property
    def pad_id(self):
        return self.token_to_id[PAD]

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, self.unk_id)

    def pos_id_of(self, tag: str) -> int:
        return self.pos_to_id.get(tag, self.pos_to_id[UNK])

    def token_ids(self, tokens) -> list:
        return [self.id_of(t) for t in tokens]

    def pos_ids(self, tags) -> list:
        return [self.pos_id_of(t) for t in tags]


def build_vocab(samples, min_count: int = 1) -> Vocab:
    """Ids ordered by frequency (descending) then lexicographically; the
    marker, unknown and padding ids are appended after corpus tokens, so
    the same corpus always yields the same vocabulary."""
    samples = list(samples)
    if not samples:
        raise UsageError("build_vocab: empty training set")
    token_counts = Counter(t for s in samples for t in s.tokens if t != MARKER)
    pos_counts = Counter(t for s in samples for t in s.pos if t != MARKER)
    tokens = _ordered(token_counts, min_count) + [MARKER, UNK, PAD]
    pos_tags = _ordered(pos_counts, 1) + [MARKER, UNK, PAD]
    return Vocab(tokens=tokens, pos_tags=pos_tags)


@dataclass
class EmbeddingTable:
    matrix: np.ndarray  # |V| x d, row i = embedding of token id i
    trainable: bool = False


def parse_vector_file(path, dim: int | None = None):
    """Parse a text vector file: one "token v1 ... vd" line per token, with
    an optional "count dim" header. Returns (dict token -> vector, dim)."""
    vectors = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.rstrip("\n").split(" ")
            if lineno == 1 and len(parts) == 2:
                try:
                    int(parts[0]), int(parts[1])
                    continue  # header line
                except ValueError:
                    pass
            if len(parts) < 2:
                raise ParseError("vector line needs a token and values", line=lineno)
            token, values = parts[0], parts[1:]
            try:
                vec = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError:
                raise ParseError(f"non-numeric vector value for {token!r}", line=lineno) from None
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise ParseError(
                    f"vector for {token!r} has {vec.size} values, expected {dim}",
                    line=lineno)
            vectors[token] = vec
    if dim is None:
        raise UsageError(f"empty vector file {path}")
    return vectors, dim


def load_embeddings(path, vocab: Vocab, rng: Rng, dim: int = 300) -> EmbeddingTable:
    """Known rows copied from file; missing rows drawn uniform(-0.05, 0.05)
    in vocabulary-id order (stable across reloads for a fixed rng seed);
    padding row is all zeros. Frozen by default."""
    vectors, file_dim = parse_vector_file(path, dim=None)
    if file_dim != dim:
        raise UsageError(
            f"embedding file {path} has dimension {file_dim}, configured {dim}")
    return build_embedding_table(vocab, rng, dim, vectors)


def build_embedding_table(vocab: Vocab, rng: Rng, dim: int,
                          vectors: dict | None = None) -> EmbeddingTable:
    vectors = vectors or {}
    matrix = np.zeros((len(vocab), dim))
    for i, token in enumerate(vocab.tokens):
        if token == PAD:
            continue
        known = vectors.get(token)
        matrix[i] = known if known is not None else rng.uniform(-0.05, 0.05, dim)
    return EmbeddingTable(matrix=matrix, trainable=False)
