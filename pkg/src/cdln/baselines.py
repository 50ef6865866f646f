"""Comparison graders: TF-IDF + Gaussian-kernel SVM, a simple RNN, a mean-embedding ANN and a single LSTM.

The neural baselines share the grader interface of :class:`cdln.fusion.CdlnModel`
(``parameters()``, ``forward(essay, training, rng)``) so the same training loop,
checkpointing and evaluation apply.  Their shapes are small and deliberately
plain; they are comparison points, not reproductions of any published system.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .errors import ConfigError, ContractError
from .fusion import DenseHead, LstmCell, dense_head_forward, lstm_forward
from .text import EmbeddingTable, TfidfModel, TokenizedEssay, Vocabulary, embed_lookup, tfidf_features

logger = logging.getLogger(__name__)


# -- kernel SVM -----------------------------------------------------------------


@dataclass(frozen=True)
class SvmConfig:
    C: float = 1.0
    gamma: float | None = None      # None -> 1 / feature count
    tol: float = 1e-3
    max_passes: int = 100
    max_sweeps: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.C <= 0:
            raise ConfigError(f"C must be > 0, got {self.C}")
        if self.gamma is not None and self.gamma <= 0:
            raise ConfigError(f"gamma must be > 0, got {self.gamma}")


def _as_csr(X) -> sp.csr_matrix:
    return sp.csr_matrix(X, dtype=float)


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    """exp(-gamma * ||a - b||^2) for every row pair of A and B."""
    A, B = _as_csr(A), _as_csr(B)
    sq_a = np.asarray(A.multiply(A).sum(axis=1)).ravel()
    sq_b = np.asarray(B.multiply(B).sum(axis=1)).ravel()
    cross = (A @ B.T).toarray()
    dist = np.maximum(sq_a[:, None] + sq_b[None, :] - 2.0 * cross, 0.0)
    return np.exp(-gamma * dist)


# multipliers this close to 0 or C count as sitting on the bound; SMO cannot
# resolve moves finer than this anyway
BOUND_EPS = 1e-5


def _at_bounds(alpha: np.ndarray, C: float) -> tuple[np.ndarray, np.ndarray]:
    return alpha <= BOUND_EPS * C, alpha >= C * (1.0 - BOUND_EPS)


def smo_binary(K: np.ndarray, y: np.ndarray, C: float, tol: float, max_passes: int, rng: np.random.Generator,
               max_sweeps: int = 10_000) -> tuple[np.ndarray, float]:
    """Simplified SMO on a precomputed kernel; ``y`` in {-1, +1}.  Returns (alpha, b).

    A KKT violator is paired with a random partner first; if that pair cannot
    move, the partner with the largest error gap is tried, then every other
    point in turn.  Training stops after ``max_passes`` sweeps without change.
    """
    n = len(y)
    alpha = np.zeros(n)
    b = 0.0
    E = -y.astype(float)            # f(x_i) - y_i with f = 0
    snap = 1e-8 * C

    def step(i: int, j: int) -> bool:
        nonlocal b
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            lo, hi = max(0.0, aj - ai), min(C, C + aj - ai)
        else:
            lo, hi = max(0.0, ai + aj - C), min(C, ai + aj)
        if hi - lo < snap:
            return False
        eta = 2.0 * K[i, j] - K[i, i] - K[j, j]
        if eta >= 0:
            return False
        aj_new = min(max(aj - y[j] * (E[i] - E[j]) / eta, lo), hi)
        if aj_new < snap:
            aj_new = 0.0
        elif aj_new > C - snap:
            aj_new = C
        if abs(aj_new - aj) < 1e-5 * (aj_new + aj + 1e-5):
            return False
        ai_new = ai + y[i] * y[j] * (aj - aj_new)
        ai_new = 0.0 if ai_new < snap else C if ai_new > C - snap else ai_new
        di, dj = y[i] * (ai_new - ai), y[j] * (aj_new - aj)
        b1 = b - E[i] - di * K[i, i] - dj * K[i, j]
        b2 = b - E[j] - di * K[i, j] - dj * K[j, j]
        if 0 < ai_new < C:
            b_new = b1
        elif 0 < aj_new < C:
            b_new = b2
        else:
            b_new = (b1 + b2) / 2.0
        E[:] += di * K[i] + dj * K[j] + (b_new - b)
        alpha[i], alpha[j], b = ai_new, aj_new, b_new
        return True

    passes = sweeps = 0
    while passes < max_passes and sweeps < max_sweeps:
        changed = 0
        for i in range(n):
            yE = y[i] * E[i]
            if not ((yE < -tol and alpha[i] < C * (1.0 - BOUND_EPS)) or (yE > tol and alpha[i] > BOUND_EPS * C)):
                continue
            j = int(rng.integers(n - 1))
            j += j >= i
            if step(i, j):
                changed += 1
                continue
            gap = np.abs(E[i] - E)
            gap[i] = -1.0
            if step(i, int(np.argmax(gap))):
                changed += 1
                continue
            offset = int(rng.integers(n))
            for k in range(n):
                j = (offset + k) % n
                if j != i and step(i, j):
                    changed += 1
                    break
        sweeps += 1
        passes = passes + 1 if changed == 0 else 0
    if sweeps >= max_sweeps:
        logger.warning("SMO stopped after %d sweeps without settling", sweeps)
    return alpha, settle_bias(K, y, alpha, C)


def settle_bias(K: np.ndarray, y: np.ndarray, alpha: np.ndarray, C: float) -> float:
    """Bias minimising the largest KKT violation for the final multipliers.

    With t = y - K(alpha y), point i is satisfied when b >= t_i (alpha_i = 0 and
    y_i = +1, or alpha_i = C and y_i = -1), b <= t_i (the other bound cases) or
    b == t_i (free).  The midpoint of [max lower, min upper] is the minimax choice.
    """
    t = y - K @ (alpha * y)
    at_zero, at_c = _at_bounds(alpha, C)
    free = ~at_zero & ~at_c
    floor = free | (at_zero & (y > 0)) | (at_c & (y < 0))
    ceiling = free | ~floor
    lo = t[floor].max(initial=-np.inf)
    hi = t[ceiling].min(initial=np.inf)
    if np.isinf(lo) and np.isinf(hi):
        return 0.0
    if np.isinf(lo) or np.isinf(hi):
        return float(hi if np.isinf(lo) else lo)
    return float((lo + hi) / 2.0)


def kkt_violation(K: np.ndarray, y: np.ndarray, alpha: np.ndarray, b: float, C: float) -> np.ndarray:
    """Per-point distance from the KKT conditions of the soft-margin dual."""
    margin = y * (K @ (alpha * y) + b)
    viol = np.zeros(len(y))
    at_zero, at_c = _at_bounds(alpha, C)
    free = ~at_zero & ~at_c
    viol[at_zero] = np.maximum(0.0, 1.0 - margin[at_zero])
    viol[at_c] = np.maximum(0.0, margin[at_c] - 1.0)
    viol[free] = np.abs(margin[free] - 1.0)
    return viol


@dataclass
class SvmModel:
    """One-vs-rest machines sharing a pool of support vectors.

    ``coef[c]`` holds alpha * y of machine c over the pooled support vectors.
    """

    classes: np.ndarray
    support_vectors: sp.csr_matrix
    coef: np.ndarray
    bias: np.ndarray
    gamma: float
    C: float
    n_features: int

    def decision(self, X) -> np.ndarray:
        X = _as_csr(X)
        if X.shape[1] != self.n_features:
            raise ContractError(f"feature width {X.shape[1]} does not match the model's {self.n_features}")
        if self.support_vectors.shape[0] == 0:
            return np.tile(self.bias, (X.shape[0], 1))
        return rbf_kernel(X, self.support_vectors, self.gamma) @ self.coef.T + self.bias


def svm_train(X, labels: Sequence[int], config: SvmConfig = SvmConfig()) -> SvmModel:
    X = _as_csr(X)
    labels = np.asarray(labels, dtype=np.int64)
    if X.shape[0] != len(labels) or len(labels) == 0:
        raise ContractError(f"{X.shape[0]} vectors for {len(labels)} labels")
    gamma = config.gamma if config.gamma is not None else 1.0 / X.shape[1]
    classes = np.unique(labels)
    if len(classes) == 1:
        logger.warning("only label %d present; the SVM will always predict it", classes[0])
        return SvmModel(classes, _as_csr(np.zeros((0, X.shape[1]))), np.zeros((1, 0)), np.zeros(1),
                        gamma, config.C, X.shape[1])
    rng = np.random.default_rng(config.seed)
    K = rbf_kernel(X, X, gamma)
    # with two classes the second machine is the first one negated
    trained = classes[1:] if len(classes) == 2 else classes
    alphas, biases = [], []
    for c in trained:
        y = np.where(labels == c, 1.0, -1.0)
        alpha, b = smo_binary(K, y, config.C, config.tol, config.max_passes, rng, config.max_sweeps)
        if not np.any(alpha > 0):
            logger.warning("machine for label %d has no support vectors", c)
        alphas.append(alpha * y)
        biases.append(b)
    coef, bias = np.array(alphas), np.array(biases)
    if len(classes) == 2:
        coef, bias = np.vstack([-coef, coef]), np.concatenate([-bias, bias])
    keep = np.flatnonzero(np.any(coef != 0, axis=0))
    return SvmModel(classes, X[keep], coef[:, keep], bias, gamma, config.C, X.shape[1])


def svm_predict(model: SvmModel, X) -> np.ndarray:
    """Label of the largest one-vs-rest decision value; ties go to the smaller label."""
    return model.classes[np.argmax(model.decision(X), axis=1)]


class SvmGrader:
    """TF-IDF features feeding a kernel SVM over raw integer scores."""

    kind = "svm"

    def __init__(self, tfidf: TfidfModel, svm: SvmModel, config: SvmConfig = SvmConfig()):
        self.tfidf, self.svm, self.config = tfidf, svm, config

    def predict_labels(self, essays: Sequence[TokenizedEssay]) -> np.ndarray:
        return svm_predict(self.svm, tfidf_features(self.tfidf, essays))


# -- neural baselines -----------------------------------------------------------


class _ConfigMixin:
    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict):
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass(frozen=True)
class RnnConfig(_ConfigMixin):
    embed_dim: int = 100
    hidden: int = 64
    max_tokens: int = 500

    @classmethod
    def toy(cls) -> "RnnConfig":
        return cls(embed_dim=4, hidden=5, max_tokens=8)


@dataclass(frozen=True)
class AnnConfig(_ConfigMixin):
    embed_dim: int = 100
    hidden: tuple[int, ...] = (64, 64)
    dropout: float = 0.3

    @classmethod
    def toy(cls) -> "AnnConfig":
        return cls(embed_dim=4, hidden=(5, 5), dropout=0.3)


@dataclass(frozen=True)
class LstmBaselineConfig(_ConfigMixin):
    embed_dim: int = 100
    hidden: int = 128
    max_tokens: int = 500

    @classmethod
    def toy(cls) -> "LstmBaselineConfig":
        return cls(embed_dim=4, hidden=5, max_tokens=8)


class SimpleRnn:
    """Elman recurrence a_t = tanh(W_aa a_{t-1} + W_ax x_t + b_a), read out through a sigmoid unit."""

    def __init__(self, input_size: int, hidden: int, rng: np.random.Generator | None = None, prefix: str = "rnn"):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.hidden = hidden
        self.W_aa = ad.init_uniform(f"{prefix}.W_aa", (hidden, hidden), rng)
        self.W_ax = ad.init_uniform(f"{prefix}.W_ax", (hidden, input_size), rng)
        self.b_a = ad.init_uniform(f"{prefix}.b_a", (hidden,), rng)
        self.W_ya = ad.init_uniform(f"{prefix}.W_ya", (1, hidden), rng)
        self.b_y = ad.init_uniform(f"{prefix}.b_y", (1,), rng)

    def parameters(self) -> list[ad.Parameter]:
        return [self.W_aa, self.W_ax, self.b_a, self.W_ya, self.b_y]


def simple_rnn_forward(rnn: SimpleRnn, frames: Sequence[ad.Tensor]) -> ad.Tensor:
    if not frames:
        raise ContractError("RNN needs at least one frame")
    a = ad.Tensor(np.zeros(rnn.hidden))
    for x in frames:
        a = ad.tanh(ad.add(ad.linear_forward(rnn.W_aa, a), ad.linear_forward(rnn.W_ax, x, rnn.b_a)))
    return ad.reshape(ad.sigmoid(ad.linear_forward(rnn.W_ya, a, rnn.b_y)), ())


def _token_ids(vocab: Vocabulary, essay: TokenizedEssay, max_tokens: int | None = None) -> list[int]:
    if not essay.tokens:
        raise ContractError("cannot grade an empty essay")
    ids = vocab.encode(essay.tokens)
    return ids[:max_tokens] if max_tokens else ids


def _frames(table: EmbeddingTable, ids: Sequence[int]) -> list[ad.Tensor]:
    E = embed_lookup(table, ids)
    return [E[t] for t in range(len(ids))]


class RnnGrader:
    kind = "rnn"

    def __init__(self, vocab: Vocabulary, config: RnnConfig = RnnConfig(), seed: int = 0):
        rng = np.random.default_rng(seed)
        self.vocab, self.config, self.seed = vocab, config, seed
        self.table = EmbeddingTable(len(vocab), config.embed_dim, rng)
        self.rnn = SimpleRnn(config.embed_dim, config.hidden, rng)

    def parameters(self) -> list[ad.Parameter]:
        return self.table.parameters() + self.rnn.parameters()

    def forward(self, essay: TokenizedEssay, training: bool = False, rng=None) -> ad.Tensor:
        ids = _token_ids(self.vocab, essay, self.config.max_tokens)
        return simple_rnn_forward(self.rnn, _frames(self.table, ids))


class AnnGrader:
    """Mean token embedding through a small relu stack."""

    kind = "ann"

    def __init__(self, vocab: Vocabulary, config: AnnConfig = AnnConfig(), seed: int = 0):
        rng = np.random.default_rng(seed)
        self.vocab, self.config, self.seed = vocab, config, seed
        self.table = EmbeddingTable(len(vocab), config.embed_dim, rng)
        self.head = DenseHead(config.embed_dim, config.hidden, config.dropout, rng, prefix="ann")

    def parameters(self) -> list[ad.Parameter]:
        return self.table.parameters() + self.head.parameters()

    def forward(self, essay: TokenizedEssay, training: bool = False, rng=None) -> ad.Tensor:
        ids = _token_ids(self.vocab, essay)
        mean = ad.scale(ad.sum_rows(embed_lookup(self.table, ids)), 1.0 / len(ids))
        return dense_head_forward(self.head, mean, training, rng)


class LstmGrader:
    kind = "lstm"

    def __init__(self, vocab: Vocabulary, config: LstmBaselineConfig = LstmBaselineConfig(), seed: int = 0):
        rng = np.random.default_rng(seed)
        self.vocab, self.config, self.seed = vocab, config, seed
        self.table = EmbeddingTable(len(vocab), config.embed_dim, rng)
        self.cell = LstmCell(config.embed_dim, config.hidden, rng, prefix="lstm_base")
        self.head = DenseHead(config.hidden, (), 0.0, rng, prefix="lstm_out")

    def parameters(self) -> list[ad.Parameter]:
        return self.table.parameters() + self.cell.parameters() + self.head.parameters()

    def forward(self, essay: TokenizedEssay, training: bool = False, rng=None) -> ad.Tensor:
        ids = _token_ids(self.vocab, essay, self.config.max_tokens)
        return dense_head_forward(self.head, lstm_forward(self.cell, _frames(self.table, ids)))
