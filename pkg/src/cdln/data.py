"""ASAP essay ingestion, score resolution and dataset splits."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, FormatError
from .text import TokenizedEssay, tokenize_essay

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("essay_id", "essay_set", "essay", "rater1_domain1", "rater2_domain1")


@dataclass(frozen=True)
class PromptSpec:
    prompt_id: int
    score_min: int
    score_max: int
    essay_count: int = 0
    avg_length: int = 0

    def __post_init__(self):
        if self.score_max <= self.score_min:
            raise DataError(f"prompt {self.prompt_id}: score_max must exceed score_min")

    @property
    def span(self) -> int:
        return self.score_max - self.score_min


# Prompt statistics and score ranges of the ASAP training release.
DEFAULT_PROMPTS: dict[int, PromptSpec] = {
    1: PromptSpec(1, 2, 12, 1783, 350),
    2: PromptSpec(2, 1, 6, 1800, 350),
    3: PromptSpec(3, 0, 3, 1726, 150),
    4: PromptSpec(4, 0, 3, 1772, 150),
    5: PromptSpec(5, 0, 4, 1805, 150),
    6: PromptSpec(6, 0, 4, 1800, 150),
    7: PromptSpec(7, 0, 30, 1569, 250),
    8: PromptSpec(8, 0, 60, 723, 650),
}


@dataclass(frozen=True)
class Essay:
    essay_id: int
    prompt_id: int
    text: str
    rater1: int
    rater2: int
    raw_score: int
    normalized_score: float

    @cached_property
    def tokenized(self) -> TokenizedEssay:
        return tokenize_essay(self.text)


@dataclass
class DatasetSplit:
    train: list[Essay]
    test: list[Essay]
    fold_assignments: dict[int, int] | None = None


def resolve_score(rater1: int, rater2: int, spec: PromptSpec, warn: bool = True) -> int:
    """Sum of the two domain-1 rater scores, clamped into the prompt's range."""
    if rater1 < 0 or rater2 < 0:
        raise DataError(f"negative rater score ({rater1}, {rater2})")
    total = rater1 + rater2
    clamped = min(max(total, spec.score_min), spec.score_max)
    if clamped != total and warn:
        logger.warning("prompt %d: rater sum %d clamped to %d", spec.prompt_id, total, clamped)
    return clamped


def normalize_score(raw: int, spec: PromptSpec) -> float:
    if not spec.score_min <= raw <= spec.score_max:
        raise DataError(f"score {raw} outside [{spec.score_min}, {spec.score_max}] for prompt {spec.prompt_id}")
    return (raw - spec.score_min) / spec.span


def make_essay(essay_id: int, prompt_id: int, text: str, rater1: int, rater2: int,
               specs: Mapping[int, PromptSpec] = DEFAULT_PROMPTS, warn: bool = True) -> Essay:
    spec = specs[prompt_id]
    raw = resolve_score(rater1, rater2, spec, warn=warn)
    return Essay(essay_id, prompt_id, text, rater1, rater2, raw, normalize_score(raw, spec))


def _decode(raw: bytes, path: Path) -> str:
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        # The Kaggle release itself is Latin-1 encoded.
        logger.warning("%s is not valid UTF-8; decoding as Latin-1", path)
        return raw.decode("latin-1")


def load_asap_tsv(path, prompt_specs: Sequence[PromptSpec] | Mapping[int, PromptSpec] | None = None) -> list[Essay]:
    """Read an ASAP training TSV into :class:`Essay` records.

    Only the five columns in ``REQUIRED_COLUMNS`` are consumed; any others are
    ignored.  Rows lacking a rater score are skipped and counted.
    """
    path = Path(path)
    if prompt_specs is None:
        specs = DEFAULT_PROMPTS
    elif isinstance(prompt_specs, Mapping):
        specs = dict(prompt_specs)
    else:
        specs = {s.prompt_id: s for s in prompt_specs}
    lines = _decode(path.read_bytes(), path).replace("\r", "").split("\n")
    if not lines or not lines[0].strip():
        raise FormatError(f"{path}: missing header row")
    header = lines[0].split("\t")
    for col in REQUIRED_COLUMNS:
        if col not in header:
            raise FormatError(f"{path}: missing required column {col!r}")
    pos = {col: header.index(col) for col in REQUIRED_COLUMNS}

    essays: list[Essay] = []
    skipped = clamped = 0
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) > len(header):
            raise FormatError(f"{path}:{lineno}: {len(fields)} fields for {len(header)} columns "
                              "(embedded tab?)")
        fields += [""] * (len(header) - len(fields))
        r1, r2 = fields[pos["rater1_domain1"]].strip(), fields[pos["rater2_domain1"]].strip()
        if not r1 or not r2:
            skipped += 1
            continue
        try:
            essay_id = int(fields[pos["essay_id"]])
            prompt_id = int(fields[pos["essay_set"]])
            rater1, rater2 = int(float(r1)), int(float(r2))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        if prompt_id not in specs:
            raise DataError(f"{path}:{lineno}: unknown prompt {prompt_id}")
        essay = make_essay(essay_id, prompt_id, fields[pos["essay"]], rater1, rater2, specs, warn=False)
        clamped += essay.raw_score != rater1 + rater2
        essays.append(essay)
    if skipped:
        logger.warning("%s: skipped %d rows with missing rater scores", path, skipped)
    if clamped:
        logger.warning("%s: %d rater sums clamped into the prompt score range", path, clamped)
    return essays


def split_train_test(essays: Sequence[Essay], ratio: float = 0.8, seed: int = 0) -> DatasetSplit:
    """Seeded shuffle split, stratified by prompt."""
    if not essays:
        raise DataError("cannot split an empty essay set")
    if not 0.0 < ratio < 1.0:
        raise DataError(f"ratio must lie strictly between 0 and 1, got {ratio}")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for prompt in sorted({e.prompt_id for e in essays}):
        group = [e for e in essays if e.prompt_id == prompt]
        order = rng.permutation(len(group))
        n_train = int(np.floor(ratio * len(group) + 0.5))
        train += [group[i] for i in order[:n_train]]
        test += [group[i] for i in order[n_train:]]
    return DatasetSplit(train, test)


def kfold_split(essays: Sequence[Essay], k: int = 8, seed: int = 0) -> dict[int, int]:
    """Map essay_id to a fold index; fold sizes differ by at most one."""
    if k < 2:
        raise DataError(f"k must be at least 2, got {k}")
    if len(essays) < k:
        raise DataError(f"{len(essays)} essays cannot fill {k} folds")
    ids = [e.essay_id for e in essays]
    if len(set(ids)) != len(ids):
        raise DataError("essay ids must be unique for fold assignment")
    order = np.random.default_rng(seed).permutation(len(essays))
    return {ids[i]: pos % k for pos, i in enumerate(order)}


def fold_split(essays: Sequence[Essay], assignments: Mapping[int, int], fold: int) -> DatasetSplit:
    train = [e for e in essays if assignments[e.essay_id] != fold]
    test = [e for e in essays if assignments[e.essay_id] == fold]
    return DatasetSplit(train, test, dict(assignments))
