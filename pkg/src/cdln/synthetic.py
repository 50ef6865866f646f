"""Synthetic essays for memorisation checks, smoke runs and demos."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .data import DEFAULT_PROMPTS, Essay, make_essay

WORDS = ("the", "a", "dog", "cat", "school", "computer", "friend", "people", "time", "think", "because",
         "help", "learn", "family", "world", "good", "many", "would", "could", "with", "about", "they")
GOOD_WORDS = ("furthermore", "consequently", "evidence", "perspective", "significant", "moreover")


def length_tied_essays(n: int = 16, prompt_id: int = 7, seed: int = 0) -> list[Essay]:
    """Essay i has i + 2 words and a raw score rising linearly with i."""
    rng = np.random.default_rng(seed)
    spec = DEFAULT_PROMPTS[prompt_id]
    essays = []
    for i in range(n):
        words = list(rng.choice(WORDS, size=i + 2))
        text = " ".join(words[:len(words) // 2]) + ". " + " ".join(words[len(words) // 2:]) + "."
        raw = spec.score_min + round(i * spec.span / max(n - 1, 1))
        essays.append(make_essay(1000 + i, prompt_id, text, raw // 2, raw - raw // 2))
    return essays


def asap_like_rows(n: int = 200, prompt_id: int = 1, seed: int = 0, mean_tokens: int = 350) -> list[dict]:
    """Rows shaped like the ASAP training TSV.

    Each essay has sentences of 12 to 27 words; its quality q in [0, 1] sets the
    rater scores, the essay length and the share of ``GOOD_WORDS``, so the grade
    is learnable.
    """
    rng = np.random.default_rng(seed)
    spec = DEFAULT_PROMPTS[prompt_id]
    rows = []
    for i in range(n):
        q = float(rng.random())
        # better essays run longer, as in the real data
        target = max(20, int(rng.normal(mean_tokens * (0.5 + q), mean_tokens / 5)))
        sentences, count = [], 0
        while count < target:
            k = int(rng.integers(12, 28))
            words = [str(rng.choice(GOOD_WORDS)) if rng.random() < 0.3 * q else str(rng.choice(WORDS))
                     for _ in range(k)]
            sentences.append(" ".join(words).capitalize() + ".")
            count += k + 1
        raw = spec.score_min + int(round(q * spec.span))
        r1 = raw // 2
        rows.append({"essay_id": 10_000 + i, "essay_set": prompt_id, "essay": " ".join(sentences),
                     "rater1_domain1": r1, "rater2_domain1": raw - r1, "domain1_score": raw})
    return rows


FIELDS = ("essay_id", "essay_set", "essay", "rater1_domain1", "rater2_domain1", "domain1_score")


def write_asap_tsv(rows: Sequence[dict], path) -> Path:
    """Plain tab-separated lines, unquoted, as in the ASAP release."""
    path = Path(path)
    lines = ["\t".join(FIELDS)]
    for row in rows:
        values = [str(row.get(f, "")) for f in FIELDS]
        if any("\t" in v or "\n" in v for v in values):
            raise ValueError(f"row {row.get('essay_id')} contains a tab or newline")
        lines.append("\t".join(values))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def essays_to_rows(essays: Sequence[Essay]) -> list[dict]:
    return [{"essay_id": e.essay_id, "essay_set": e.prompt_id, "essay": e.text, "rater1_domain1": e.rater1,
             "rater2_domain1": e.rater2, "domain1_score": e.raw_score} for e in essays]


def memorisation_setup(seed: int = 0):
    """Essays, trainer settings and toy CDLN config for the memorisation check.

    Dropout is off and every word is kept in the vocabulary, so the only thing
    standing between the model and zero training error is optimisation.
    """
    from .fusion import CdlnConfig
    from .training import TrainConfig

    cfg = TrainConfig(learning_rate=0.005, batch_size=2, epochs=200, dropout_rate=0.0, seed=seed,
                      vocab_min_count=1)
    return length_tied_essays(16), cfg, CdlnConfig.toy()
