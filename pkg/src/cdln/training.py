"""Loss, the mini-batch training loop and k-fold cross-validation."""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .baselines import SvmConfig, SvmGrader, svm_train
from .data import DEFAULT_PROMPTS, DatasetSplit, Essay, PromptSpec, fold_split, kfold_split
from .errors import ConfigError, ContractError, DataError
from .metrics import MetricsReport, evaluate_predictions, mean_report
from .models import build_model, default_config, predict_normalized
from .text import build_vocab, tfidf_features, tfidf_fit


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 15
    dropout_rate: float = 0.3
    seed: int = 0
    k_folds: int = 8
    vocab_min_count: int = 2

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.k_folds < 2:
            raise ConfigError(f"k_folds must be >= 2, got {self.k_folds}")
        if self.vocab_min_count < 1:
            raise ConfigError(f"vocab_min_count must be >= 1, got {self.vocab_min_count}")


def mse_loss(pred: Sequence[float], gold: Sequence[float]) -> float:
    if len(pred) != len(gold):
        raise ContractError(f"length mismatch: {len(pred)} predictions, {len(gold)} targets")
    if not pred:
        raise ContractError("mse of an empty sequence")
    return float(np.mean((np.asarray(pred, dtype=float) - np.asarray(gold, dtype=float)) ** 2))


@dataclass
class TrainResult:
    model: object
    losses: list[float]


EpochHook = Callable[[int, float], None]


def train_model(model, data: Sequence[Essay] | DatasetSplit, cfg: TrainConfig = TrainConfig(),
                on_epoch: EpochHook | None = None) -> TrainResult:
    """Adam on per-batch mean squared error against normalized scores.

    One generator seeded from ``cfg.seed`` drives both the per-epoch shuffle and
    dropout, so a run is a pure function of (model, data, cfg).  The recorded
    loss for an epoch is the mean training-mode squared error seen during it.
    """
    essays = list(data.train if isinstance(data, DatasetSplit) else data)
    if not essays:
        raise DataError("empty training set")
    rng = np.random.default_rng(cfg.seed)
    opt = ad.Adam(model.parameters(), lr=cfg.learning_rate)
    ad.zero_grad(model.parameters())
    losses = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(essays))
        total = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            batch = order[lo:lo + cfg.batch_size]
            for i in batch:
                essay = essays[i]
                diff = ad.sub(model.forward(essay.tokenized, training=True, rng=rng),
                              ad.Tensor(essay.normalized_score))
                ad.backward(ad.scale(ad.mul(diff, diff), 1.0 / len(batch)))
                total += diff.item() ** 2
            opt.step()
        losses.append(total / len(essays))
        if on_epoch is not None:
            on_epoch(epoch, losses[-1])
    return TrainResult(model, losses)


def _with_dropout(config, rate: float):
    if dataclasses.is_dataclass(config) and any(f.name == "dropout" for f in dataclasses.fields(config)):
        return dataclasses.replace(config, dropout=rate)
    return config


def fit_model(kind: str, essays: Sequence[Essay], cfg: TrainConfig = TrainConfig(), model_config=None,
              on_epoch: EpochHook | None = None) -> TrainResult:
    """Build a grader of ``kind`` from the training essays alone and train it.

    The vocabulary (or TF-IDF model) comes from these essays only.  For models
    with a dropout setting, ``cfg.dropout_rate`` takes precedence.
    """
    if not essays:
        raise DataError("empty training set")
    tokenized = [e.tokenized for e in essays]
    if kind == "svm":
        config = model_config if model_config is not None else SvmConfig(seed=cfg.seed)
        tfidf = tfidf_fit(tokenized)
        svm = svm_train(tfidf_features(tfidf, tokenized), [e.raw_score for e in essays], config)
        return TrainResult(SvmGrader(tfidf, svm, config), [])
    config = model_config if model_config is not None else default_config(kind)
    model = build_model(kind, build_vocab(tokenized, cfg.vocab_min_count), _with_dropout(config, cfg.dropout_rate),
                        seed=cfg.seed)
    return train_model(model, essays, cfg, on_epoch)


@dataclass
class CrossValResult:
    folds: list[MetricsReport]
    mean: MetricsReport


def _run_fold(essays, assignments, fold, cfg, kind, model_config, specs, on_epoch=None) -> MetricsReport:
    split = fold_split(essays, assignments, fold)
    model = fit_model(kind, split.train, cfg, model_config, on_epoch).model
    return evaluate_predictions(split.test, predict_normalized(model, split.test, specs), specs)


def cross_validate(essays: Sequence[Essay], cfg: TrainConfig = TrainConfig(), kind: str = "cdln",
                   model_config=None, specs: Mapping[int, PromptSpec] = DEFAULT_PROMPTS, workers: int = 1,
                   on_fold: Callable[[int, MetricsReport], None] | None = None,
                   on_epoch: Callable[[int, int, float], None] | None = None) -> CrossValResult:
    """Train one model per fold and evaluate it on that fold's held-out essays.

    Folds are independent; ``workers > 1`` runs them in separate processes.
    Results do not depend on the worker count.
    """
    essays = list(essays)
    if len(essays) < cfg.k_folds:
        raise ContractError(f"{len(essays)} essays cannot fill {cfg.k_folds} folds")
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    assignments = kfold_split(essays, cfg.k_folds, cfg.seed)
    args = [(essays, assignments, f, cfg, kind, model_config, specs) for f in range(cfg.k_folds)]
    reports: list[MetricsReport] = []
    if workers == 1:
        for a in args:
            hook = (lambda e, loss, f=a[2]: on_epoch(f, e, loss)) if on_epoch else None
            reports.append(_run_fold(*a, on_epoch=hook))
            if on_fold is not None:
                on_fold(a[2], reports[-1])
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for fold, report in enumerate(pool.map(_run_fold, *zip(*args))):
                reports.append(report)
                if on_fold is not None:
                    on_fold(fold, report)
    return CrossValResult(reports, mean_report(reports))
