"""Essay-level convolution / average-pooling stack over concatenated embeddings."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ContractError, DimensionError
from .text import PAD, EmbeddingTable, embed_lookup


@dataclass(frozen=True)
class CnnBranchConfig:
    max_tokens: int = 500
    conv_width: int = 105
    pool_width: int = 90
    channels: int = 8
    rounds: int = 5
    conv_stride: int = 1
    pool_stride: int = 4
    padding: str = "same"

    def __post_init__(self):
        for name in ("max_tokens", "conv_width", "pool_width", "channels", "rounds", "conv_stride", "pool_stride"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.padding not in ("valid", "same"):
            raise ConfigError(f"padding must be 'valid' or 'same', got {self.padding!r}")

    def lengths(self, signal_length: int) -> list[int]:
        """Signal length after each round (conv then pool); 0 marks a dead round."""
        out, L = [], signal_length
        for _ in range(self.rounds):
            L = ad.conv_output_length(L, self.conv_width, self.conv_stride, self.padding)
            L = ad.pool_output_length(L, self.pool_width, self.pool_stride, self.padding) if L > 0 else 0
            out.append(L)
            if L == 0:
                break
        return out

    def flat_size(self, embed_dim: int) -> int:
        lengths = self.lengths(self.max_tokens * embed_dim)
        if len(lengths) < self.rounds or lengths[-1] < 1:
            raise ConfigError(f"a {self.max_tokens * embed_dim}-long signal does not survive {self.rounds} rounds")
        return lengths[-1] * self.channels


class CnnBranch:
    """Bias-free kernels: round 1 maps 1 -> C channels, later rounds C -> C."""

    def __init__(self, config: CnnBranchConfig = CnnBranchConfig(), rng: np.random.Generator | None = None,
                 prefix: str = "cnn", init_scale: float = ad.INIT_SCALE):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.config = config
        C, K = config.channels, config.conv_width
        self.kernels = [ad.init_uniform(f"{prefix}.k{r}", (C, 1 if r == 0 else C, K), rng, init_scale)
                        for r in range(config.rounds)]

    def parameters(self) -> list[ad.Parameter]:
        return list(self.kernels)


def essay_signal(token_ids: Sequence[int], table: EmbeddingTable, max_tokens: int) -> ad.Tensor:
    """(1, max_tokens * dim) concatenation of the first ``max_tokens`` embeddings, PAD-filled."""
    if max_tokens < 1:
        raise ContractError(f"max_tokens must be >= 1, got {max_tokens}")
    ids = list(token_ids)[:max_tokens]
    if not ids or all(i == PAD for i in ids):
        raise ContractError("essay has no tokens")
    ids += [PAD] * (max_tokens - len(ids))
    rows = embed_lookup(table, ids)
    return ad.reshape(rows, (1, max_tokens * table.dim))


def cnn_branch_forward(branch: CnnBranch, signal: ad.Tensor) -> ad.Tensor:
    """Rounds of conv -> relu -> average pool, flattened channel-major."""
    cfg = branch.config
    x = signal
    for r, kernel in enumerate(branch.kernels, start=1):
        L = x.shape[1]
        if ad.conv_output_length(L, cfg.conv_width, cfg.conv_stride, cfg.padding) < 1:
            raise DimensionError(f"round {r}: signal of length {L} is shorter than conv width {cfg.conv_width}")
        x = ad.relu(ad.conv1d_forward(x, kernel, cfg.conv_stride, cfg.padding))
        if ad.pool_output_length(x.shape[1], cfg.pool_width, cfg.pool_stride, cfg.padding) < 1:
            raise DimensionError(f"round {r}: signal of length {x.shape[1]} cannot be pooled "
                                 f"with window {cfg.pool_width}, stride {cfg.pool_stride}")
        x = ad.avgpool1d_forward(x, cfg.pool_width, cfg.pool_stride, cfg.padding)
    return ad.reshape(x, (x.size,))
