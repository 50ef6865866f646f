"""The full grading network: CNN and RvNN branches fused into an LSTM and a dense head."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .cnn import CnnBranch, CnnBranchConfig, cnn_branch_forward, essay_signal
from .errors import ConfigError, ContractError, DimensionError
from .rvnn import CompositionConfig, CompositionNet, essay_struct_vector
from .text import EmbeddingTable, TokenizedEssay, Vocabulary


def fuse_vectors(cnn_out: ad.Tensor, rvnn_out: ad.Tensor, frame: int = 100) -> list[ad.Tensor]:
    """Concatenate both branch outputs, zero-pad to a multiple of ``frame`` and slice."""
    if cnn_out.data.ndim != 1 or cnn_out.size < 1:
        raise ContractError(f"cnn output must be a non-empty vector, got shape {cnn_out.shape}")
    if rvnn_out.data.ndim != 1:
        raise ContractError(f"rvnn output must be a vector, got shape {rvnn_out.shape}")
    fused = ad.concat([cnn_out, rvnn_out])
    fused = ad.pad_tail(fused, -fused.size % frame)
    return [fused[i:i + frame] for i in range(0, fused.size, frame)]


class LstmCell:
    """Standard LSTM with separate input/forget/output/candidate gate parameters."""

    GATES = ("i", "f", "o", "c")

    def __init__(self, input_size: int, hidden: int, rng: np.random.Generator | None = None, prefix: str = "lstm",
                 init_scale: float = ad.INIT_SCALE):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.input_size, self.hidden = input_size, hidden
        width = input_size + hidden
        self.W = {g: ad.init_uniform(f"{prefix}.W_{g}", (hidden, width), rng, init_scale) for g in self.GATES}
        self.b = {g: ad.init_uniform(f"{prefix}.b_{g}", (hidden,), rng, init_scale) for g in self.GATES}

    def parameters(self) -> list[ad.Parameter]:
        return [self.W[g] for g in self.GATES] + [self.b[g] for g in self.GATES]


def lstm_forward(cell: LstmCell, frames: Sequence[ad.Tensor]) -> ad.Tensor:
    """Final hidden state after running the frames from a zero state."""
    if not frames:
        raise ContractError("LSTM needs at least one frame")
    h = ad.Tensor(np.zeros(cell.hidden))
    c = ad.Tensor(np.zeros(cell.hidden))
    for x in frames:
        if x.shape != (cell.input_size,):
            raise DimensionError(f"frame shape {x.shape} does not match LSTM input {cell.input_size}")
        z = ad.concat([x, h])
        i = ad.sigmoid(ad.linear_forward(cell.W["i"], z, cell.b["i"]))
        f = ad.sigmoid(ad.linear_forward(cell.W["f"], z, cell.b["f"]))
        o = ad.sigmoid(ad.linear_forward(cell.W["o"], z, cell.b["o"]))
        g = ad.tanh(ad.linear_forward(cell.W["c"], z, cell.b["c"]))
        c = ad.add(ad.mul(f, c), ad.mul(i, g))
        h = ad.mul(o, ad.tanh(c))
    return h


class DenseHead:
    """Hidden relu layers with dropout, then one sigmoid unit."""

    def __init__(self, input_size: int, hidden: Sequence[int] = (120,) * 5, dropout: float = 0.3,
                 rng: np.random.Generator | None = None, prefix: str = "dense", init_scale: float = ad.INIT_SCALE):
        rng = rng if rng is not None else np.random.default_rng(0)
        if not 0.0 <= dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {dropout}")
        self.input_size, self.dropout = input_size, dropout
        widths = [input_size, *hidden, 1]
        self.layers = [(ad.init_uniform(f"{prefix}.W{k}", (n_out, n_in), rng, init_scale),
                        ad.init_uniform(f"{prefix}.b{k}", (n_out,), rng, init_scale))
                       for k, (n_in, n_out) in enumerate(zip(widths[:-1], widths[1:]))]

    def parameters(self) -> list[ad.Parameter]:
        return [p for layer in self.layers for p in layer]


def dense_head_forward(head: DenseHead, h: ad.Tensor, training: bool = False, rng=None) -> ad.Tensor:
    if h.shape != (head.input_size,):
        raise ContractError(f"dense head expects ({head.input_size},), got {h.shape}")
    if training and rng is None:
        rng = np.random.default_rng(0)
    x = h
    for W, b in head.layers[:-1]:
        x = ad.dropout_apply(ad.relu(ad.linear_forward(W, x, b)), head.dropout, training, rng)
    W, b = head.layers[-1]
    return ad.reshape(ad.sigmoid(ad.linear_forward(W, x, b)), ())


# Widths of 4 to 8 units need a wider init than the default: at +-0.08 the
# toy model sits on a constant-output plateau and cannot memorise anything.
TOY_INIT_SCALE = 0.8


@dataclass(frozen=True)
class CdlnConfig:
    embed_dim: int = 100
    composition_hidden: tuple[int, ...] = (150, 150, 150, 150)
    max_sentence_len: int = 60
    cnn: CnnBranchConfig = field(default_factory=CnnBranchConfig)
    lstm_hidden: int = 256
    dense_hidden: tuple[int, ...] = (120,) * 5
    dropout: float = 0.3
    init_scale: float = ad.INIT_SCALE

    def __post_init__(self):
        if not self.init_scale > 0:
            raise ConfigError(f"init_scale must be > 0, got {self.init_scale}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    @classmethod
    def toy(cls, **overrides) -> "CdlnConfig":
        """The small configuration used for gradient checks and the memorisation run."""
        base = dict(embed_dim=4, composition_hidden=(6, 6, 6, 6),
                    cnn=CnnBranchConfig(max_tokens=16, conv_width=3, pool_width=2, channels=2, rounds=2,
                                        pool_stride=2),
                    lstm_hidden=8, dense_hidden=(6,) * 5, dropout=0.0, init_scale=TOY_INIT_SCALE)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CdlnConfig":
        d = dict(d)
        d["cnn"] = CnnBranchConfig(**d["cnn"])
        d["composition_hidden"] = tuple(d["composition_hidden"])
        d["dense_hidden"] = tuple(d["dense_hidden"])
        return cls(**d)


class CdlnModel:
    kind = "cdln"

    def __init__(self, vocab: Vocabulary, config: CdlnConfig = CdlnConfig(), seed: int = 0):
        rng = np.random.default_rng(seed)
        self.vocab, self.config, self.seed = vocab, config, seed
        s = config.init_scale
        self.table = EmbeddingTable(len(vocab), config.embed_dim, rng, init_scale=s)
        self.composer = CompositionNet(
            CompositionConfig(config.embed_dim, tuple(config.composition_hidden),
                              max_sentence_len=config.max_sentence_len), rng, init_scale=s)
        self.cnn = CnnBranch(config.cnn, rng, init_scale=s)
        self.lstm = LstmCell(config.embed_dim, config.lstm_hidden, rng, init_scale=s)
        self.head = DenseHead(config.lstm_hidden, config.dense_hidden, config.dropout, rng, init_scale=s)
        config.cnn.flat_size(config.embed_dim)
        ad.check_unique_names(self.parameters())

    def parameters(self) -> list[ad.Parameter]:
        return (self.table.parameters() + self.composer.parameters() + self.cnn.parameters()
                + self.lstm.parameters() + self.head.parameters())

    def encode(self, essay: TokenizedEssay) -> tuple[list[int], list[list[int]]]:
        ids = self.vocab.encode(essay.tokens)
        return ids, [ids[a:b] for a, b in essay.sentences]

    def forward(self, essay: TokenizedEssay, training: bool = False, rng=None, trees=None) -> ad.Tensor:
        return cdln_forward(self, essay, training, rng, trees)


def cdln_forward(model: CdlnModel, essay: TokenizedEssay, training: bool = False, rng=None,
                 trees=None) -> ad.Tensor:
    """Normalised grade in (0, 1) for one tokenised essay.

    ``trees`` optionally fixes the per-sentence parse structure.
    """
    if not essay.tokens:
        raise ContractError("cannot grade an empty essay")
    ids, sentences = model.encode(essay)
    cfg = model.config
    cnn_out = cnn_branch_forward(model.cnn, essay_signal(ids, model.table, cfg.cnn.max_tokens))
    struct = essay_struct_vector(model.composer, model.table, sentences, trees)
    h = lstm_forward(model.lstm, fuse_vectors(cnn_out, struct, cfg.embed_dim))
    return dense_head_forward(model.head, h, training, rng)
