"""Tokenisation, vocabulary, word embeddings and TF-IDF vectors."""

from __future__ import annotations

import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .errors import ContractError, DataError, FormatError

logger = logging.getLogger(__name__)

EMBED_DIM = 100
UNK, PAD = 0, 1
UNK_TOKEN, PAD_TOKEN = "<unk>", "<pad>"
SENTENCE_END = frozenset({".", "!", "?"})

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, and break every punctuation mark out on its own."""
    return _TOKEN_RE.findall(text.lower())


def split_sentences(tokens: Sequence[str]) -> list[tuple[int, int]]:
    """Half-open ``(start, end)`` ranges, each closing after ``.``, ``!`` or ``?``."""
    ranges, start = [], 0
    for i, tok in enumerate(tokens):
        if tok in SENTENCE_END:
            ranges.append((start, i + 1))
            start = i + 1
    if start < len(tokens):
        ranges.append((start, len(tokens)))
    return ranges


@dataclass(frozen=True)
class TokenizedEssay:
    tokens: tuple[str, ...]
    sentences: tuple[tuple[int, int], ...]

    def sentence_tokens(self) -> list[tuple[str, ...]]:
        return [self.tokens[a:b] for a, b in self.sentences]

    def __len__(self) -> int:
        return len(self.tokens)


def tokenize_essay(text: str) -> TokenizedEssay:
    tokens = tokenize(text)
    return TokenizedEssay(tuple(tokens), tuple(split_sentences(tokens)))


class Vocabulary:
    """Token to index map with index 0 reserved for UNK and 1 for PAD."""

    def __init__(self, tokens: Iterable[str]):
        self.itos: list[str] = [UNK_TOKEN, PAD_TOKEN]
        self.stoi: dict[str, int] = {UNK_TOKEN: UNK, PAD_TOKEN: PAD}
        for tok in tokens:
            if tok in self.stoi:
                raise DataError(f"duplicate vocabulary token {tok!r}")
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def index(self, token: str) -> int:
        return self.stoi.get(token, UNK)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def words(self) -> list[str]:
        """Real tokens in index order (the reserved slots excluded)."""
        return self.itos[2:]

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos


def build_vocab(corpus: Sequence[TokenizedEssay], min_count: int = 2) -> Vocabulary:
    """Tokens seen at least ``min_count`` times, by descending count then lexically."""
    if not corpus:
        raise DataError("cannot build a vocabulary from an empty corpus")
    if min_count < 1:
        raise DataError(f"min_count must be >= 1, got {min_count}")
    counts = Counter(tok for essay in corpus for tok in essay.tokens)
    kept = [t for t, c in counts.items() if c >= min_count and t not in (UNK_TOKEN, PAD_TOKEN)]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(kept)


class EmbeddingTable:
    """Trainable V x dim matrix whose PAD row is pinned at zero."""

    def __init__(self, vocab_size: int, dim: int = EMBED_DIM, rng: np.random.Generator | None = None,
                 name: str = "embedding", init_scale: float = ad.INIT_SCALE):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.matrix = ad.init_uniform(name, (vocab_size, dim), rng, init_scale)
        self.matrix.data[PAD] = 0.0

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def parameters(self) -> list[ad.Parameter]:
        return [self.matrix]


def embed_lookup(table: EmbeddingTable, indices: Sequence[int]) -> ad.Tensor:
    """(T, dim) rows of the table; gradients flow to every row except PAD."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= len(table)):
        raise ContractError(f"token index out of range for vocabulary of {len(table)}")
    return ad.gather_rows(table.matrix, idx, frozen_row=PAD)


def load_word_vectors(path, vocab: Vocabulary, table: EmbeddingTable) -> int:
    """Overwrite table rows from a text file of ``token v1 ... v_dim`` lines.

    Returns the number of vocabulary rows filled.  Unknown tokens are ignored.
    """
    filled = 0
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if len(parts) != table.dim + 1:
                raise FormatError(f"{path}:{lineno}: expected token + {table.dim} values, got {len(parts) - 1}")
            idx = vocab.stoi.get(parts[0])
            if idx is None or idx == PAD:
                continue
            try:
                table.matrix.data[idx] = [float(v) for v in parts[1:]]
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            filled += 1
    logger.info("loaded %d pretrained vectors from %s", filled, path)
    return filled


# ---------------------------------------------------------------------------
# TF-IDF


@dataclass
class TfidfModel:
    df: dict[str, int]
    n: int
    features: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.features:
            self.features = sorted(self.df)
        self.feature_index = {w: i for i, w in enumerate(self.features)}

    def idf(self, word: str) -> float:
        """Smoothed inverse document frequency; unseen words count as df = 0."""
        return math.log((1 + self.n) / (1 + self.df.get(word, 0))) + 1.0


def tfidf_fit(corpus: Sequence[TokenizedEssay]) -> TfidfModel:
    if not corpus:
        raise DataError("cannot fit TF-IDF on an empty corpus")
    df = Counter()
    for essay in corpus:
        df.update(set(essay.tokens))
    return TfidfModel(dict(df), len(corpus))


def tfidf_transform(model: TfidfModel, essay: TokenizedEssay) -> dict[str, float]:
    """Sparse l2-normalised vector; raw counts as term frequency."""
    weights = {w: c * model.idf(w) for w, c in Counter(essay.tokens).items()}
    norm = math.sqrt(sum(v * v for v in weights.values()))
    if norm == 0.0:
        return {}
    return {w: v / norm for w, v in weights.items()}


def tfidf_features(model: TfidfModel, essays: Sequence[TokenizedEssay]):
    """Dense-indexable CSR matrix over the model's features plus one trailing column.

    The trailing column holds the l2 mass of words the model never saw, so each
    row keeps unit norm.  Training rows always have zero there, which keeps
    Gaussian kernel values against training vectors exact.
    """
    import scipy.sparse as sp

    rows, cols, vals = [], [], []
    oov_col = len(model.features)
    for r, essay in enumerate(essays):
        oov = 0.0
        for w, v in tfidf_transform(model, essay).items():
            j = model.feature_index.get(w)
            if j is None:
                oov += v * v
            else:
                rows.append(r), cols.append(j), vals.append(v)
        if oov:
            rows.append(r), cols.append(oov_col), vals.append(math.sqrt(oov))
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(essays), oov_col + 1))
