"""Run configuration: a flat key=value file, overridden by command-line flags.

Model-shape keys default to empty, which means "whatever the selected model's
default (or toy) configuration says".  Only keys that the chosen model actually
has are applied to it.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping

from .cnn import CnnBranchConfig
from .errors import ConfigError
from .models import MODEL_KINDS, default_config
from .training import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    # inputs and outputs
    data: str = ""
    modified: str = ""
    checkpoint: str = ""
    out: str = ""
    report: str = ""
    essay: str = ""
    sentence: str = ""
    # selection
    model: str = "cdln"
    prompt: int = 0
    max_essays: int = 0
    toy: bool = False
    workers: int = 1
    bucket: int = 50
    # training
    seed: int = 0
    learning_rate: float = TrainConfig.learning_rate
    batch_size: int = TrainConfig.batch_size
    epochs: int = TrainConfig.epochs
    dropout_rate: float = TrainConfig.dropout_rate
    k_folds: int = TrainConfig.k_folds
    vocab_min_count: int = TrainConfig.vocab_min_count
    # model shape; None keeps the model's own default
    embed_dim: int | None = None
    hidden: tuple[int, ...] | None = None
    composition_hidden: tuple[int, ...] | None = None
    max_sentence_len: int | None = None
    lstm_hidden: int | None = None
    dense_hidden: tuple[int, ...] | None = None
    init_scale: float | None = None
    max_tokens: int | None = None
    conv_width: int | None = None
    pool_width: int | None = None
    channels: int | None = None
    rounds: int | None = None
    conv_stride: int | None = None
    pool_stride: int | None = None
    padding: str | None = None

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {', '.join(MODEL_KINDS)}, got {self.model!r}")
        for name in ("prompt", "max_essays"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        for name in ("workers", "bucket"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        self.train_config()

    def train_config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate, batch_size=self.batch_size, epochs=self.epochs,
                           dropout_rate=self.dropout_rate, seed=self.seed, k_folds=self.k_folds,
                           vocab_min_count=self.vocab_min_count)

    def model_config(self):
        """The selected model's configuration with every set shape key applied."""
        base = default_config(self.model, toy=self.toy)
        own = {f.name for f in fields(base)}
        cnn_keys = {f.name for f in fields(CnnBranchConfig)}
        top, cnn = {}, {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name not in SHAPE_KEYS or value is None:
                continue
            if f.name in own:
                top[f.name] = _fit_to_field(base, f.name, value)
            elif f.name in cnn_keys and "cnn" in own:
                cnn[f.name] = value
        if cnn:
            top["cnn"] = dataclasses.replace(base.cnn, **cnn)
        return dataclasses.replace(base, **top)

    def to_text(self) -> str:
        return "".join(f"{f.name}={format_value(getattr(self, f.name))}\n" for f in fields(self))


SHAPE_KEYS = frozenset(f.name for f in fields(RunConfig) if f.default is None)
_HINTS = typing.get_type_hints(RunConfig)


def _fit_to_field(base, name: str, value):
    """Hidden sizes are written as lists; single-layer models take the lone entry."""
    current = getattr(base, name)
    if isinstance(value, tuple) and isinstance(current, int):
        if len(value) != 1:
            raise ConfigError(f"{name} takes a single size for model {type(base).__name__}, got {value}")
        return value[0]
    return value


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _parse_scalar(kind, text: str, key: str):
    if kind is bool:
        low = text.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ConfigError(f"{key}: expected true or false, got {text!r}")
    try:
        return kind(text)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {text!r}") from None


def parse_value(key: str, text: str):
    if key not in _HINTS:
        raise ConfigError(f"unknown config key {key!r}")
    hint = _HINTS[key]
    args = typing.get_args(hint)
    optional = type(None) in args
    if optional:
        if text.strip() == "":
            return None
        hint = next(a for a in args if a is not type(None))
    text = text.strip()
    if typing.get_origin(hint) is tuple:
        parts = [p for p in text.split(",") if p.strip()]
        if not parts:
            raise ConfigError(f"{key}: expected a comma-separated list of sizes")
        return tuple(_parse_scalar(int, p.strip(), key) for p in parts)
    return _parse_scalar(hint, text, key)


def parse_config_text(text: str, source: str = "<config>") -> dict[str, object]:
    """``key = value`` lines; '#' starts a comment, blank lines are skipped."""
    out: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            out[key] = parse_value(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return out


def resolve_config(path=None, overrides: Mapping[str, str] | None = None) -> RunConfig:
    """Defaults, then the file at ``path``, then ``overrides`` (raw strings)."""
    values: dict[str, object] = {}
    if path:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
        values.update(parse_config_text(text, str(path)))
    for key, raw in (overrides or {}).items():
        values[key] = parse_value(key, raw)
    return RunConfig(**values)
