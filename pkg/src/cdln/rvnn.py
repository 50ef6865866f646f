"""Recursive composition of word vectors over a best-split span chart.

A composition network merges two child vectors into a parent
``p = f(W [c_left; c_right] + b)`` (a small tanh MLP) and scores it with
``s = w_score . p``.  For each sentence a CKY-style chart keeps, per span, the
split maximising ``A[left] + A[right] + s`` together with the parent vector.
Single tokens have score 0 and carry their embedding.

Training differentiates through the selected tree only; the argmax over splits
is treated as a constant.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ContractError, DimensionError
from .text import EmbeddingTable, embed_lookup

logger = logging.getLogger(__name__)

MAX_SENTENCE_LEN = 60

_NP_ACTIVATIONS = {
    "tanh": np.tanh,
    "sigmoid": ad._sigmoid,
    "relu": lambda z: np.maximum(z, 0.0),
}


@dataclass(frozen=True)
class CompositionConfig:
    embed_dim: int = 100
    hidden: tuple[int, ...] = (150, 150, 150, 150)
    activation: str = "tanh"
    max_sentence_len: int = MAX_SENTENCE_LEN


class CompositionNet:
    """Stack ``2d -> hidden... -> d`` with the activation after every layer."""

    def __init__(self, config: CompositionConfig = CompositionConfig(), rng: np.random.Generator | None = None,
                 prefix: str = "rvnn", init_scale: float = ad.INIT_SCALE):
        rng = rng if rng is not None else np.random.default_rng(0)
        if config.activation not in _NP_ACTIVATIONS:
            raise ConfigError(f"unknown activation {config.activation!r}")
        self.config = config
        d = config.embed_dim
        widths = [2 * d, *config.hidden, d]
        self.layers: list[tuple[ad.Parameter, ad.Parameter]] = []
        for i, (n_in, n_out) in enumerate(zip(widths[:-1], widths[1:])):
            self.layers.append((ad.init_uniform(f"{prefix}.W{i}", (n_out, n_in), rng, init_scale),
                                ad.init_uniform(f"{prefix}.b{i}", (n_out,), rng, init_scale)))
        self.w_score = ad.init_uniform(f"{prefix}.w_score", (d,), rng, init_scale)

    @property
    def dim(self) -> int:
        return self.config.embed_dim

    def parameters(self) -> list[ad.Parameter]:
        return [p for layer in self.layers for p in layer] + [self.w_score]

    def compose_batch(self, left: np.ndarray, right: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Untracked composition of many (left, right) row pairs at once."""
        h = np.concatenate([left, right], axis=1)
        act = _NP_ACTIVATIONS[self.config.activation]
        for W, b in self.layers:
            h = act(h @ W.data.T + b.data)
        return h, h @ self.w_score.data


def compose_pair(net: CompositionNet, c_left: ad.Tensor, c_right: ad.Tensor) -> tuple[ad.Tensor, ad.Tensor]:
    """Parent vector and its score for two child vectors."""
    if c_left.shape != (net.dim,) or c_right.shape != (net.dim,):
        raise ContractError(f"children must both have shape ({net.dim},), got {c_left.shape} and {c_right.shape}")
    h = ad.concat([c_left, c_right])
    for W, b in net.layers:
        h = ad.activation_apply(net.config.activation, ad.linear_forward(W, h, b))
    return h, ad.dot(net.w_score, h)


@dataclass
class SpanChart:
    """Chart over a sentence of length T; spans are inclusive ``(i, j)``.

    Trees are nested pairs with integer token positions at the leaves.
    """

    score: np.ndarray          # (T, T); upper triangle used
    vector: np.ndarray         # (T, T, d)
    split: np.ndarray          # (T, T); -1 on leaves
    compositions: int = 0
    tokens: Sequence[str] | None = field(default=None, repr=False)

    @property
    def length(self) -> int:
        return self.score.shape[0]

    def tree(self, i: int = 0, j: int | None = None):
        j = self.length - 1 if j is None else j
        if i == j:
            return i
        k = int(self.split[i, j])
        return (self.tree(i, k), self.tree(k + 1, j))

    def bracketing(self, tokens: Sequence[str] | None = None) -> str:
        tokens = tokens if tokens is not None else self.tokens
        return format_tree(self.tree(), tokens)


def format_tree(tree, tokens: Sequence[str] | None = None) -> str:
    if isinstance(tree, int):
        return tokens[tree] if tokens is not None else str(tree)
    return f"({format_tree(tree[0], tokens)} {format_tree(tree[1], tokens)})"


def _as_array(embeddings) -> np.ndarray:
    return embeddings.data if isinstance(embeddings, ad.Tensor) else np.asarray(embeddings, dtype=float)


def _check_embeddings(net: CompositionNet, embeddings) -> np.ndarray:
    E = _as_array(embeddings)
    if E.ndim != 2 or E.shape[0] == 0:
        raise ContractError(f"need a (T, d) embedding matrix with T >= 1, got {E.shape}")
    if E.shape[1] != net.dim:
        raise DimensionError(f"embedding width {E.shape[1]} does not match composition width {net.dim}")
    cap = net.config.max_sentence_len
    if E.shape[0] > cap:
        logger.warning("sentence of %d tokens truncated to %d", E.shape[0], cap)
        E = E[:cap]
    return E


def parse_sentences(net: CompositionNet, embeddings_list: Sequence) -> list[tuple[SpanChart, np.ndarray, float]]:
    """Fill one span chart per sentence, batching all sentences per span width.

    Ties go to the smallest split index.  Charts live in one flat array where
    span (i, j) of sentence s sits at row ``offset[s] + i * T[s] + j``.  The
    first layer is linear in each child, so every span is projected once as a
    left child and once as a right child instead of once per split.
    """
    Es = [_check_embeddings(net, E) for E in embeddings_list]
    if not Es:
        return []
    d = net.dim
    act = _NP_ACTIVATIONS[net.config.activation]
    W0, b0 = net.layers[0][0].data, net.layers[0][1].data
    WL, WR = W0[:, :d].T, W0[:, d:].T
    T = np.array([len(E) for E in Es])
    offs = np.concatenate([[0], np.cumsum(T * T)[:-1]])
    n_rows = int((T * T).sum())
    A = np.zeros(n_rows)
    C = np.zeros((n_rows, d))
    split = np.full(n_rows, -1, dtype=np.int64)
    diag = np.concatenate([off + np.arange(t) * (t + 1) for off, t in zip(offs, T)])
    C[diag] = np.concatenate(Es)
    PL = np.zeros((n_rows, W0.shape[0]))
    PR = np.zeros_like(PL)
    PL[diag], PR[diag] = C[diag] @ WL, C[diag] @ WR
    for width in range(2, int(T.max()) + 1):
        live = np.flatnonzero(T >= width)
        n_spans = T[live] - width + 1
        sent = np.repeat(live, n_spans)
        start = np.arange(n_spans.sum()) - np.repeat(np.cumsum(n_spans) - n_spans, n_spans)
        end = start + width - 1
        base, t = offs[sent][:, None], T[sent][:, None]
        ks = start[:, None] + np.arange(width - 1)[None, :]
        left = base + start[:, None] * t + ks
        right = base + (ks + 1) * t + end[:, None]
        h = act(PL[left] + PR[right] + b0).reshape(-1, W0.shape[0])
        for W, b in net.layers[1:]:
            h = act(h @ W.data.T + b.data)
        s = h @ net.w_score.data
        totals = A[left] + A[right] + s.reshape(ks.shape)
        best = np.argmax(totals, axis=1)
        rows = np.arange(len(start))
        target = offs[sent] + start * T[sent] + end
        A[target] = totals[rows, best]
        C[target] = h.reshape(*ks.shape, d)[rows, best]
        split[target] = ks[rows, best]
        PL[target], PR[target] = C[target] @ WL, C[target] @ WR
    out = []
    for off, t in zip(offs, T):
        sl = slice(off, off + t * t)
        chart = SpanChart(A[sl].reshape(t, t), C[sl].reshape(t, t, d), split[sl].reshape(t, t),
                          count_compositions(int(t)))
        out.append((chart, chart.vector[0, t - 1].copy(), float(chart.score[0, t - 1])))
    return out


def parse_sentence(net: CompositionNet, embeddings) -> tuple[SpanChart, np.ndarray, float]:
    """Chart, root vector and root score for one sentence."""
    return parse_sentences(net, [embeddings])[0]


def compose_tree(net: CompositionNet, embeddings: ad.Tensor, tree) -> tuple[ad.Tensor, ad.Tensor]:
    """Root vector and summed score of a fixed tree, recorded for backprop."""
    if isinstance(tree, int):
        return embeddings[tree], ad.Tensor(0.0)
    lv, ls = compose_tree(net, embeddings, tree[0])
    rv, rs = compose_tree(net, embeddings, tree[1])
    p, s = compose_pair(net, lv, rv)
    return p, ad.add(ad.add(ls, rs), s)


_NP_DERIVATIVES = {
    "tanh": lambda y: 1.0 - y * y,
    "sigmoid": lambda y: y * (1.0 - y),
    "relu": lambda y: (y > 0.0).astype(float),
}


def _schedule(trees: Sequence, n_leaves: int):
    """Number internal nodes after the leaves and group them by height."""
    left, right, height, owner, roots = [], [], [], [], []

    def visit(tree, s):
        if isinstance(tree, (int, np.integer)):
            if not 0 <= tree < n_leaves:
                raise ContractError(f"tree leaf {tree} outside 0..{n_leaves - 1}")
            return int(tree), 0
        (a, ha), (b, hb) = visit(tree[0], s), visit(tree[1], s)
        left.append(a)
        right.append(b)
        height.append(max(ha, hb) + 1)
        owner.append(s)
        return n_leaves + len(left) - 1, height[-1]

    for s, tree in enumerate(trees):
        roots.append(visit(tree, s)[0])
    height = np.array(height, dtype=np.int64)
    levels = [np.flatnonzero(height == h) for h in range(1, int(height.max(initial=0)) + 1)]
    return np.array(left, dtype=np.int64), np.array(right, dtype=np.int64), levels, \
        np.array(owner, dtype=np.int64), np.array(roots, dtype=np.int64)


def compose_forest(net: CompositionNet, leaves: ad.Tensor, trees: Sequence) -> ad.Tensor:
    """Root vectors and summed scores of several fixed trees in one recorded op.

    Tree leaves index rows of ``leaves``.  Returns an (S, d + 1) tensor: row s
    holds tree s's root vector followed by its total composition score.  Nodes
    are evaluated a height level at a time, which is equivalent to running
    :func:`compose_tree` per tree.
    """
    if leaves.data.ndim != 2 or leaves.shape[1] != net.dim:
        raise ContractError(f"leaves must be (N, {net.dim}), got {leaves.shape}")
    d, N = net.dim, leaves.shape[0]
    act = _NP_ACTIVATIONS[net.config.activation]
    deriv = _NP_DERIVATIVES[net.config.activation]
    left, right, levels, owner, roots = _schedule(trees, N)
    M, S = len(left), len(trees)
    V = np.zeros((N + M, d))
    V[:N] = leaves.data
    node_score = np.zeros(M)
    saved = []
    for level in levels:
        inputs = [np.concatenate([V[left[level]], V[right[level]]], axis=1)]
        for W, b in net.layers:
            inputs.append(act(inputs[-1] @ W.data.T + b.data))
        V[N + level] = inputs[-1]
        node_score[level] = inputs[-1] @ net.w_score.data
        saved.append(inputs)
    out = np.concatenate([V[roots], np.bincount(owner, node_score, minlength=S)[:, None]], axis=1)

    def back(g):
        dV = np.zeros_like(V)
        np.add.at(dV, roots, g[:, :d])
        g_score = g[owner, d]
        dW = [np.zeros_like(W.data) for W, _ in net.layers]
        db = [np.zeros_like(b.data) for _, b in net.layers]
        dw_score = np.zeros(d)
        for level, inputs in zip(reversed(levels), reversed(saved)):
            gs = g_score[level]
            dw_score += gs @ inputs[-1]
            delta = dV[N + level] + gs[:, None] * net.w_score.data
            for k in range(len(net.layers) - 1, -1, -1):
                delta = delta * deriv(inputs[k + 1])
                dW[k] += delta.T @ inputs[k]
                db[k] += delta.sum(axis=0)
                delta = delta @ net.layers[k][0].data
            dV[left[level]] += delta[:, :d]
            dV[right[level]] += delta[:, d:]
        return (dV[:N], *[x for pair in zip(dW, db) for x in pair], dw_score)

    return ad._make(out, (leaves, *net.parameters()), back)


def count_compositions(T: int) -> int:
    """Compositions needed to fill a chart of length T: sum over spans of width - 1."""
    return sum((T - w + 1) * (w - 1) for w in range(2, T + 1))


def _truncate(net: CompositionNet, sentences: Sequence[Sequence[int]]) -> list[list[int]]:
    cap = net.config.max_sentence_len
    out = []
    for ids in sentences:
        if len(ids) > cap:
            logger.warning("sentence of %d tokens truncated to %d", len(ids), cap)
        if len(ids):
            out.append(list(ids)[:cap])
    return out


def sentence_trees(net: CompositionNet, table: EmbeddingTable, sentences: Sequence[Sequence[int]]) -> list:
    """Best tree per sentence under the current parameters."""
    sentences = _truncate(net, sentences)
    if not sentences:
        return []
    E = table.matrix.data
    with ad.no_grad():
        return [chart.tree() for chart, _, _ in parse_sentences(net, [E[ids] for ids in sentences])]


def essay_struct_vector(net: CompositionNet, table: EmbeddingTable, sentences: Sequence[Sequence[int]],
                        trees: Sequence | None = None) -> ad.Tensor:
    """Sum over sentences of each sentence's root vector.

    ``sentences`` holds vocabulary indices per sentence.  Passing ``trees``
    freezes the structure (gradient checks do this); otherwise each sentence is
    parsed with the current parameters.
    """
    sentences = _truncate(net, sentences)
    if not sentences:
        raise ContractError("essay has no sentences")
    if trees is None:
        trees = sentence_trees(net, table, sentences)
    if len(trees) != len(sentences):
        raise ContractError(f"{len(trees)} trees for {len(sentences)} sentences")
    offsets = np.cumsum([0] + [len(ids) for ids in sentences[:-1]])
    shifted = [_shift(tree, int(off)) for tree, off in zip(trees, offsets)]
    leaves = embed_lookup(table, [i for ids in sentences for i in ids])
    packed = compose_forest(net, leaves, shifted)
    return ad.sum_rows(packed[:, :net.dim])


def _shift(tree, offset: int):
    if isinstance(tree, (int, np.integer)):
        return int(tree) + offset
    return (_shift(tree[0], offset), _shift(tree[1], offset))
