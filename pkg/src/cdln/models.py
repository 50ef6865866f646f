"""Registry of grader kinds and the operations shared by all of them."""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .baselines import (
    AnnConfig, AnnGrader, LstmBaselineConfig, LstmGrader, RnnConfig, RnnGrader, SvmConfig, SvmGrader,
)
from .data import DEFAULT_PROMPTS, Essay, PromptSpec, normalize_score
from .errors import ConfigError
from .fusion import CdlnConfig, CdlnModel
from .metrics import denormalize_and_round
from .text import Vocabulary, tokenize_essay

NEURAL_KINDS = {
    "cdln": (CdlnModel, CdlnConfig),
    "rnn": (RnnGrader, RnnConfig),
    "ann": (AnnGrader, AnnConfig),
    "lstm": (LstmGrader, LstmBaselineConfig),
}
MODEL_KINDS = (*NEURAL_KINDS, "svm")


def default_config(kind: str, toy: bool = False):
    if kind == "svm":
        return SvmConfig()
    if kind not in NEURAL_KINDS:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {', '.join(MODEL_KINDS)}")
    cls = NEURAL_KINDS[kind][1]
    return cls.toy() if toy else cls()


def config_from_dict(kind: str, d: dict):
    if kind == "svm":
        return SvmConfig(**d)
    if kind not in NEURAL_KINDS:
        raise ConfigError(f"unknown model kind {kind!r}")
    return NEURAL_KINDS[kind][1].from_dict(d)


def build_model(kind: str, vocab: Vocabulary, config=None, seed: int = 0):
    """Freshly initialised neural grader of the given kind."""
    if kind not in NEURAL_KINDS:
        raise ConfigError(f"{kind!r} is not a neural model kind")
    cls, cfg_cls = NEURAL_KINDS[kind]
    return cls(vocab, config if config is not None else cfg_cls(), seed)


def predict_normalized(model, essays: Sequence[Essay],
                       specs: Mapping[int, PromptSpec] = DEFAULT_PROMPTS) -> list[float]:
    """Normalized grade per essay, with no dropout and no graph recording."""
    if isinstance(model, SvmGrader):
        labels = model.predict_labels([e.tokenized for e in essays])
        out = []
        for e, label in zip(essays, labels):
            spec = specs[e.prompt_id]
            out.append(normalize_score(int(min(max(label, spec.score_min), spec.score_max)), spec))
        return out
    with ad.no_grad():
        return [model.forward(e.tokenized, training=False).item() for e in essays]


def snap_to_storage_precision(model) -> None:
    """Round every stored number to float32 so a checkpoint round trip is exact."""
    snap = lambda a: a.astype(np.float32).astype(np.float64)
    if isinstance(model, SvmGrader):
        svm = model.svm
        svm.coef, svm.bias = snap(svm.coef), snap(svm.bias)
        svm.support_vectors.data = snap(svm.support_vectors.data)
        return
    for p in model.parameters():
        p.data[...] = snap(p.data)


def grade_text(model, text: str, spec: PromptSpec) -> tuple[int, float]:
    """(integer grade, normalized grade) for one essay written for ``spec``'s prompt."""
    essay = tokenize_essay(text)
    if isinstance(model, SvmGrader):
        label = int(model.predict_labels([essay])[0])
        norm = normalize_score(min(max(label, spec.score_min), spec.score_max), spec)
    else:
        with ad.no_grad():
            norm = model.forward(essay, training=False).item()
    return denormalize_and_round(norm, spec), norm
