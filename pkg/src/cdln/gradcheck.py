"""Finite-difference checks of every differentiable op and of each full model at toy size."""

from __future__ import annotations

import time
from typing import Callable, Iterator

import numpy as np

from . import autodiff as ad
from .baselines import AnnConfig, AnnGrader, LstmBaselineConfig, LstmGrader, RnnConfig, RnnGrader
from .cnn import CnnBranch, CnnBranchConfig, cnn_branch_forward
from .fusion import CdlnConfig, CdlnModel, DenseHead, LstmCell, dense_head_forward, lstm_forward
from .rvnn import CompositionConfig, CompositionNet, compose_forest, compose_pair, sentence_trees
from .text import EmbeddingTable, Vocabulary, embed_lookup, tokenize_essay

EPSILON = 1e-5
TOLERANCE = 1e-4

Case = tuple[str, Callable[[], ad.Tensor], list[ad.Parameter]]

_VOCAB = Vocabulary(["the", "dog", "is", "here", ".", "a", "cat", "ran", "!"])
_ESSAY = "The dog is here. A cat ran! The zebra is here"


def _weighted(t: ad.Tensor, rng) -> ad.Tensor:
    return ad.total(ad.mul(t, ad.Tensor(rng.normal(size=t.shape))))


def primitive_cases(seed: int = 0) -> Iterator[Case]:
    rng = np.random.default_rng(seed)
    P = lambda name, shape: ad.Parameter(name, rng.normal(size=shape))

    W, x, b = P("W", (3, 4)), P("x", (4,)), P("b", (3,))
    yield "linear", lambda: _weighted(ad.linear_forward(W, x, b), np.random.default_rng(1)), [W, x, b]
    for act in ("tanh", "sigmoid", "relu"):
        # keep inputs at least 0.1 from relu's kink so both difference points share a side
        r = rng.normal(size=6)
        z = ad.Parameter("z", r + np.sign(r) * 0.1)
        yield act, (lambda z=z, act=act: _weighted(ad.activation_apply(act, z), np.random.default_rng(2))), [z]
    for pad in ("valid", "same"):
        for method in ("direct", "fft"):
            s, k = P("signal", (2, 11)), P("kernels", (3, 2, 3))
            yield (f"conv1d[{pad},{method}]",
                   lambda s=s, k=k, pad=pad, method=method: _weighted(
                       ad.conv1d_forward(s, k, 1, pad, method), np.random.default_rng(3)),
                   [s, k])
        s = P("signal", (2, 13))
        yield (f"avgpool1d[{pad}]",
               lambda s=s, pad=pad: _weighted(ad.avgpool1d_forward(s, 3, 2, pad), np.random.default_rng(4)), [s])
    table = P("table", (5, 3))
    yield "gather_rows", lambda: _weighted(ad.gather_rows(table, [0, 2, 2, 4], frozen_row=0),
                                           np.random.default_rng(5)), [table]
    a, c = P("a", (3,)), P("c", (4,))
    yield "concat+pad_tail", lambda: _weighted(ad.pad_tail(ad.concat([a, c]), 3), np.random.default_rng(6)), [a, c]
    m = P("m", (2, 3))
    yield ("reshape+index+mean+sum_rows",
           lambda: ad.stack_sum([ad.mean(ad.mul(ad.reshape(m, (6,))[1:5], ad.reshape(m, (6,))[0:4])),
                                 _weighted(ad.sum_rows(m), np.random.default_rng(7))]), [m])
    u, v = P("u", (4,)), P("v", (4,))
    yield "dot+sub+scale", lambda: ad.scale(ad.dot(ad.sub(u, v), u), 0.5), [u, v]


def component_cases(seed: int = 0) -> Iterator[Case]:
    rng = np.random.default_rng(seed)
    tbl = EmbeddingTable(len(_VOCAB), 3, rng)
    yield "embedding_lookup", lambda: _weighted(embed_lookup(tbl, [1, 0, 3, 3]), np.random.default_rng(8)), \
        tbl.parameters()

    net = CompositionNet(CompositionConfig(3, (4, 4)), rng)
    left, right = ad.Parameter("left", rng.normal(size=3)), ad.Parameter("right", rng.normal(size=3))
    yield ("compose_pair",
           lambda: ad.add(_weighted(compose_pair(net, left, right)[0], np.random.default_rng(9)),
                          compose_pair(net, left, right)[1]),
           net.parameters() + [left, right])
    leaves = ad.Parameter("leaves", rng.normal(size=(5, 3)))
    trees = [((0, 1), 2), (3, 4)]
    yield "compose_forest", lambda: _weighted(compose_forest(net, leaves, trees), np.random.default_rng(10)), \
        net.parameters() + [leaves]

    branch = CnnBranch(CnnBranchConfig(max_tokens=4, conv_width=3, pool_width=2, channels=2, rounds=2,
                                       pool_stride=2), rng)
    sig = ad.Parameter("signal", rng.normal(size=(1, 12)))
    yield "cnn_branch", lambda: _weighted(cnn_branch_forward(branch, sig), np.random.default_rng(11)), \
        branch.parameters() + [sig]

    cell = LstmCell(3, 4, rng)
    frames = [ad.Parameter(f"frame{i}", rng.normal(size=3)) for i in range(3)]
    yield "lstm", lambda: _weighted(lstm_forward(cell, frames), np.random.default_rng(12)), \
        cell.parameters() + frames

    head = DenseHead(4, (5, 5), dropout=0.3, rng=rng)
    h = ad.Parameter("h", rng.normal(size=4))
    yield "dense_head", lambda: dense_head_forward(head, h, training=True, rng=np.random.default_rng(13)), \
        head.parameters() + [h]


def model_cases(seed: int = 0) -> Iterator[Case]:
    essay = tokenize_essay(_ESSAY)
    cdln = CdlnModel(_VOCAB, CdlnConfig.toy(dropout=0.3), seed)
    # the parse is piecewise constant in the parameters, so it is fixed while differencing
    trees = sentence_trees(cdln.composer, cdln.table, cdln.encode(essay)[1])
    yield ("model:cdln",
           lambda: cdln.forward(essay, training=True, rng=np.random.default_rng(14), trees=trees),
           cdln.parameters())
    for name, cls, cfg in (("rnn", RnnGrader, RnnConfig.toy()), ("ann", AnnGrader, AnnConfig.toy()),
                           ("lstm", LstmGrader, LstmBaselineConfig.toy())):
        model = cls(_VOCAB, cfg, seed)
        yield (f"model:{name}",
               lambda model=model: model.forward(essay, training=True, rng=np.random.default_rng(15)),
               model.parameters())


def all_cases(seed: int = 0) -> Iterator[Case]:
    yield from primitive_cases(seed)
    yield from component_cases(seed)
    yield from model_cases(seed)


def run_gradcheck(seed: int = 0, epsilon: float = EPSILON, tolerance: float = TOLERANCE,
                  report: Callable[[str, ad.CheckReport, float], None] | None = None) -> bool:
    """Check every case; True only if all of them pass."""
    ok = True
    for name, fn, params in all_cases(seed):
        t0 = time.perf_counter()
        result = ad.finite_diff_check(fn, params, epsilon, tolerance)
        ok &= result.passed
        if report is not None:
            report(name, result, time.perf_counter() - t0)
    return ok
