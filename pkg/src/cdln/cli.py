"""Command-line entry point.  Exit status: 0 success, 1 runtime or data failure, 2 usage error."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Sequence

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, resolve_config
from .data import DEFAULT_PROMPTS, load_asap_tsv
from .errors import CdlnError, ConfigError, DataError
from .fusion import CdlnModel
from .gradcheck import run_gradcheck
from .metrics import MetricsReport, bucket_average, denormalize_and_round, evaluate_predictions, format_buckets, \
    robustness_delta
from .models import build_model, grade_text, predict_normalized, snap_to_storage_precision
from .rvnn import parse_sentence
from .text import build_vocab, tokenize, tokenize_essay
from .training import cross_validate, fit_model

# flags whose meaning differs per subcommand: (subcommand, flag) -> config key
_ALIASES = {("evaluate", "model"): "checkpoint", ("grade", "model"): "checkpoint",
            ("robustness", "model"): "checkpoint", ("parse-debug", "model"): "checkpoint",
            ("robustness", "original"): "data"}

COMMANDS = {
    "ingest": "validate a training TSV and print per-prompt statistics",
    "train": "train a grader and write a checkpoint",
    "evaluate": "score a TSV with a checkpoint and print metrics",
    "grade": "grade a single essay",
    "crossval": "k-fold cross-validation",
    "robustness": "compare grades of original and modified essays",
    "gradcheck": "finite-difference gradient checks",
    "parse-debug": "show the best bracketing of a sentence",
}


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdln", description="Essay grading with a CNN + RvNN + LSTM model.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    for name, help_text in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", metavar="FILE", help="key=value config file; flags override it")
        taken = set()
        for (cmd, flag), key in _ALIASES.items():
            if cmd == name:
                p.add_argument(f"--{flag}", dest=f"set_{key}", default=argparse.SUPPRESS, metavar=key.upper())
                taken.add(flag)
        for f in fields(RunConfig):
            flag = f.name.replace("_", "-")
            if f.name in taken or flag in taken:
                continue
            if f.type in (bool, "bool"):
                p.add_argument(f"--{flag}", dest=f"set_{f.name}", nargs="?", const="true",
                               default=argparse.SUPPRESS, metavar="BOOL")
            else:
                p.add_argument(f"--{flag}", dest=f"set_{f.name}", default=argparse.SUPPRESS,
                               metavar=f.name.upper())
    return parser


def _require(cfg: RunConfig, *keys: str) -> None:
    missing = [k for k in keys if not getattr(cfg, k)]
    if missing:
        raise ConfigError(f"missing required setting(s): {', '.join('--' + k.replace('_', '-') for k in missing)}")


def _load_essays(cfg: RunConfig, path: str | None = None):
    essays = load_asap_tsv(path or cfg.data)
    if cfg.prompt:
        essays = [e for e in essays if e.prompt_id == cfg.prompt]
    if cfg.max_essays:
        essays = essays[:cfg.max_essays]
    if not essays:
        raise DataError(f"no essays selected from {path or cfg.data}")
    return essays


def _write_report(cfg: RunConfig, text: str) -> None:
    print(text, end="")
    if cfg.report:
        Path(cfg.report).write_text(text, encoding="utf-8")


def cmd_ingest(cfg: RunConfig) -> int:
    _require(cfg, "data")
    essays = _load_essays(cfg)
    print("prompt\tessays\tscore_min\tscore_max\tmean_score\tmean_tokens")
    for pid in sorted({e.prompt_id for e in essays}):
        group = [e for e in essays if e.prompt_id == pid]
        spec = DEFAULT_PROMPTS[pid]
        mean_score = sum(e.raw_score for e in group) / len(group)
        mean_tokens = sum(len(e.tokenized.tokens) for e in group) / len(group)
        print(f"{pid}\t{len(group)}\t{spec.score_min}\t{spec.score_max}\t{mean_score:.3f}\t{mean_tokens:.1f}")
    print(f"total\t{len(essays)}")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    _require(cfg, "data", "out")
    essays = _load_essays(cfg)
    print(f"training {cfg.model} on {len(essays)} essays")
    result = fit_model(cfg.model, essays, cfg.train_config(), cfg.model_config(),
                       on_epoch=lambda e, loss: print(f"epoch={e} loss={loss!r}", flush=True))
    snap_to_storage_precision(result.model)
    save_checkpoint(result.model, cfg.out)
    print(f"wrote {cfg.out}")
    return 0


def cmd_evaluate(cfg: RunConfig) -> int:
    _require(cfg, "checkpoint", "data")
    model = load_checkpoint(cfg.checkpoint)
    essays = _load_essays(cfg)
    report = evaluate_predictions(essays, predict_normalized(model, essays))
    _write_report(cfg, report.to_text())
    return 0


def cmd_grade(cfg: RunConfig) -> int:
    _require(cfg, "checkpoint", "essay", "prompt")
    if cfg.prompt not in DEFAULT_PROMPTS:
        raise ConfigError(f"unknown prompt {cfg.prompt}")
    model = load_checkpoint(cfg.checkpoint)
    text = Path(cfg.essay).read_text(encoding="utf-8", errors="replace")
    score, norm = grade_text(model, text, DEFAULT_PROMPTS[cfg.prompt])
    print(f"score={score} normalized={norm!r}")
    return 0


def cmd_crossval(cfg: RunConfig) -> int:
    _require(cfg, "data")
    essays = _load_essays(cfg)
    print(f"cross-validating {cfg.model} on {len(essays)} essays, {cfg.k_folds} folds, {cfg.workers} worker(s)",
          flush=True)
    on_epoch = None
    if cfg.workers == 1:
        on_epoch = lambda f, e, loss: print(f"fold={f} epoch={e} loss={loss!r}", flush=True)
    result = cross_validate(essays, cfg.train_config(), cfg.model, cfg.model_config(), workers=cfg.workers,
                            on_fold=lambda f, r: print(f"fold={f} done", flush=True), on_epoch=on_epoch)
    lines = ["fold\t" + MetricsReport.header()]
    lines += [f"{i}\t{r.record()}" for i, r in enumerate(result.folds)]
    lines.append(f"mean\t{result.mean.record()}")
    _write_report(cfg, "\n".join(lines) + "\n")
    return 0


def cmd_robustness(cfg: RunConfig) -> int:
    _require(cfg, "checkpoint", "data", "modified")
    model = load_checkpoint(cfg.checkpoint)
    original, modified = load_asap_tsv(cfg.data), load_asap_tsv(cfg.modified)
    if len(original) != len(modified):
        raise DataError(f"{len(original)} original essays but {len(modified)} modified ones")
    for row, (a, b) in enumerate(zip(original, modified), start=1):
        if a.essay_id != b.essay_id or a.prompt_id != b.prompt_id:
            raise DataError(f"files are not aligned at essay {row}: id {a.essay_id} (prompt {a.prompt_id}) "
                            f"vs id {b.essay_id} (prompt {b.prompt_id})")
    if not original:
        raise DataError("no essays to compare")

    def grades(essays):
        return [denormalize_and_round(p, DEFAULT_PROMPTS[e.prompt_id])
                for e, p in zip(essays, predict_normalized(model, essays))]

    g_orig, g_mod = grades(original), grades(modified)
    lines = ["essay_id\toriginal\tmodified"]
    lines += [f"{e.essay_id}\t{a}\t{b}" for e, a, b in zip(original, g_orig, g_mod)]
    lines.append(f"delta={robustness_delta(list(zip(g_orig, g_mod)))!r}")
    _write_report(cfg, "\n".join(lines) + "\n")
    buckets = {"original": format_buckets(bucket_average(g_orig, cfg.bucket)),
               "modified": format_buckets(bucket_average(g_mod, cfg.bucket))}
    for which, text in buckets.items():
        if cfg.out:
            path = Path(f"{cfg.out}.{which}.tsv")
            path.write_text(text, encoding="utf-8")
            print(f"wrote {path}")
        else:
            print(f"# buckets of {cfg.bucket}, {which}")
            print(text, end="")
    return 0


def cmd_gradcheck(cfg: RunConfig) -> int:
    ok = run_gradcheck(cfg.seed, report=lambda name, r, secs: print(f"{name}\t{r}\t{secs:.2f}s", flush=True))
    print("gradcheck: all checks passed" if ok else "gradcheck: FAILED")
    return 0 if ok else 1


def cmd_parse_debug(cfg: RunConfig) -> int:
    _require(cfg, "sentence")
    tokens = tokenize(cfg.sentence)
    if not tokens:
        raise DataError("sentence has no tokens")
    if cfg.checkpoint:
        model = load_checkpoint(cfg.checkpoint)
        if not isinstance(model, CdlnModel):
            raise ConfigError(f"parse-debug needs a cdln checkpoint, got {getattr(model, 'kind', 'svm')}")
    else:
        if cfg.model != "cdln":
            raise ConfigError("parse-debug without a checkpoint builds a fresh cdln model; set --model cdln")
        vocab = build_vocab([tokenize_essay(cfg.sentence)], min_count=1)
        model = build_model("cdln", vocab, cfg.model_config(), cfg.seed)
    ids = model.vocab.encode(tokens)
    chart, _, score = parse_sentence(model.composer, model.table.matrix.data[ids])
    print(f"tree={chart.bracketing(tokens)}")
    print(f"score={float(score)!r}")
    print("i\tj\tspan\tsplit\tscore")
    T = len(tokens)
    for width in range(2, T + 1):
        for i in range(T - width + 1):
            j = i + width - 1
            print(f"{i}\t{j}\t{' '.join(tokens[i:j + 1])}\t{int(chart.split[i, j])}\t{float(chart.score[i, j])!r}")
    return 0


HANDLERS = {"ingest": cmd_ingest, "train": cmd_train, "evaluate": cmd_evaluate, "grade": cmd_grade,
            "crossval": cmd_crossval, "robustness": cmd_robustness, "gradcheck": cmd_gradcheck,
            "parse-debug": cmd_parse_debug}


def run_cli(argv: Sequence[str]) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("set_")}
    try:
        cfg = resolve_config(args.config, overrides)
        cfg.model_config()
    except ConfigError as exc:
        print(f"cdln {args.command}: {exc}", file=sys.stderr)
        return 2
    print(f"# seed={cfg.seed}")
    print("".join(f"# {line}\n" for line in cfg.to_text().splitlines()), end="", flush=True)
    try:
        return HANDLERS[args.command](cfg)
    except ConfigError as exc:
        print(f"cdln {args.command}: {exc}", file=sys.stderr)
        return 2
    except (CdlnError, OSError) as exc:
        msg = f"{exc.strerror}: {exc.filename}" if isinstance(exc, OSError) and exc.filename else str(exc)
        print(f"cdln {args.command}: {msg}", file=sys.stderr)
        return 1


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
