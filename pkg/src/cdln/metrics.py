"""Agreement metrics, the paraphrase-robustness delta and report serialization."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Mapping, Sequence

import numpy as np

from .data import DEFAULT_PROMPTS, Essay, PromptSpec
from .errors import ContractError

NAN = float("nan")


def denormalize_and_round(pred: float, spec: PromptSpec) -> int:
    """Map a (0, 1) prediction onto the prompt's integer scale, rounding half up."""
    grade = math.floor(pred * spec.span + 0.5) + spec.score_min
    return int(min(max(grade, spec.score_min), spec.score_max))


def _pair(a: Sequence, b: Sequence, min_len: int = 1) -> tuple[np.ndarray, np.ndarray]:
    if len(a) != len(b):
        raise ContractError(f"length mismatch: {len(a)} vs {len(b)}")
    if len(a) < min_len:
        raise ContractError(f"need at least {min_len} values, got {len(a)}")
    return np.asarray(a), np.asarray(b)


def accuracy(pred: Sequence[int], gold: Sequence[int]) -> float:
    p, g = _pair(pred, gold)
    return float(np.mean(p == g))


def mse(pred: Sequence[float], gold: Sequence[float]) -> float:
    p, g = _pair(pred, gold)
    return float(np.mean((p.astype(float) - g) ** 2))


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample correlation; NaN when either side has zero variance."""
    a, b = _pair(x, y, min_len=2)
    a = a.astype(float) - np.mean(a)
    b = b.astype(float) - np.mean(b)
    denom = math.sqrt(float(a @ a) * float(b @ b))
    if denom == 0.0:
        return NAN
    return float(np.clip((a @ b) / denom, -1.0, 1.0))


def qwk(pred: Sequence[int], gold: Sequence[int], lo: int, hi: int) -> float:
    """Quadratic weighted kappa over the full label range ``lo..hi``.

    NaN when the expected weighted disagreement is zero.
    """
    p, g = _pair(pred, gold)
    if p.min() < lo or g.min() < lo or p.max() > hi or g.max() > hi:
        raise ContractError(f"labels must lie in [{lo}, {hi}]")
    n = hi - lo + 1
    if n == 1:
        return NAN
    # Integer arithmetic throughout: the (n-1)^2 weight scale and the 1/N in
    # the expected counts cancel, leaving one correctly rounded division.
    O = np.bincount((g - lo) * n + (p - lo), minlength=n * n).reshape(n, n).astype(np.int64)
    idx = np.arange(n, dtype=np.int64)
    w = (idx[:, None] - idx[None, :]) ** 2
    den = int((w * np.outer(O.sum(axis=1), O.sum(axis=0))).sum())
    if den == 0:
        return NAN
    num = len(p) * int((w * O).sum())
    return (den - num) / den


def robustness_delta(pairs: Sequence[tuple[float, float]]) -> float:
    """Mean squared difference between original and modified grades."""
    if len(pairs) == 0:
        raise ContractError("robustness delta needs at least one pair")
    arr = np.asarray(pairs, dtype=float)
    return float(np.mean((arr[:, 0] - arr[:, 1]) ** 2))


def bucket_average(grades: Sequence[float], bucket: int = 50) -> list[float]:
    if bucket < 1:
        raise ContractError(f"bucket must be >= 1, got {bucket}")
    if len(grades) == 0:
        raise ContractError("no grades to average")
    g = np.asarray(grades, dtype=float)
    return [float(g[i:i + bucket].mean()) for i in range(0, len(g), bucket)]


def format_buckets(averages: Sequence[float], bucket: int = 50) -> str:
    """Two columns: 1-based bucket number and its mean grade."""
    return "".join(f"{i}\t{_fmt(a)}\n" for i, a in enumerate(averages, start=1))


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return "-"
    return "nan" if math.isnan(x) else repr(float(x))


@dataclass(frozen=True)
class MetricsReport:
    """One evaluation run.  ``record()`` writes these fields tab-separated, in declaration order."""

    n: int
    accuracy: float
    pcc: float
    qwk: float
    mse: float
    delta: float | None = None

    def to_text(self) -> str:
        return "".join(f"{f.name}={_fmt(getattr(self, f.name))}\n" for f in fields(self))

    def record(self) -> str:
        return "\t".join(_fmt(getattr(self, f.name)) for f in fields(self))

    @classmethod
    def header(cls) -> str:
        return "\t".join(f.name for f in fields(cls))


def evaluate_predictions(essays: Sequence[Essay], preds: Sequence[float],
                         specs: Mapping[int, PromptSpec] = DEFAULT_PROMPTS) -> MetricsReport:
    """Score normalized predictions against the essays' gold grades.

    Accuracy compares integer grades after :func:`denormalize_and_round`; PCC and
    MSE use the normalized values.  QWK is computed per prompt on that prompt's
    full range and averaged weighted by essay count.
    """
    if len(essays) != len(preds):
        raise ContractError(f"{len(preds)} predictions for {len(essays)} essays")
    if not essays:
        raise ContractError("nothing to evaluate")
    pred_grades = [denormalize_and_round(p, specs[e.prompt_id]) for e, p in zip(essays, preds)]
    gold_grades = [e.raw_score for e in essays]
    gold_norm = [e.normalized_score for e in essays]
    kappas, weights = [], []
    for pid in sorted({e.prompt_id for e in essays}):
        rows = [i for i, e in enumerate(essays) if e.prompt_id == pid]
        spec = specs[pid]
        kappas.append(qwk([pred_grades[i] for i in rows], [gold_grades[i] for i in rows],
                          spec.score_min, spec.score_max))
        weights.append(len(rows))
    return MetricsReport(
        n=len(essays),
        accuracy=accuracy(pred_grades, gold_grades),
        pcc=pearson(preds, gold_norm) if len(essays) >= 2 else NAN,
        qwk=float(np.average(kappas, weights=weights)),
        mse=mse(preds, gold_norm),
    )


def mean_report(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Field-wise arithmetic mean; a NaN in any fold makes that mean NaN."""
    if not reports:
        raise ContractError("no reports to average")
    deltas = [r.delta for r in reports]
    return MetricsReport(
        n=sum(r.n for r in reports),
        accuracy=float(np.mean([r.accuracy for r in reports])),
        pcc=float(np.mean([r.pcc for r in reports])),
        qwk=float(np.mean([r.qwk for r in reports])),
        mse=float(np.mean([r.mse for r in reports])),
        delta=None if any(d is None for d in deltas) else float(np.mean(deltas)),
    )
