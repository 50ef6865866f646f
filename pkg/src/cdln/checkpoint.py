"""Versioned named-tensor checkpoint files.

Layout, all integers little-endian::

    8 bytes   magic "CDLNCKPT"
    u32       format version (1)
    u32       entry count
    per entry:
        u16   name length in bytes, then the UTF-8 name
        u8    rank, then one u32 per dimension
        f32   values, row-major

Configuration and vocabulary travel in an entry named ``meta.config``: UTF-8
JSON whose bytes are stored one per float.  Values are float32, so a model
round-trips exactly once its parameters are already float32-representable
(see :func:`cdln.models.snap_to_storage_precision`).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .baselines import SvmConfig, SvmGrader, SvmModel
from .errors import FormatError, UnsupportedVersionError
from .models import NEURAL_KINDS, build_model, config_from_dict
from .text import TfidfModel, Vocabulary

MAGIC = b"CDLNCKPT"
VERSION = 1
META = "meta.config"


def encode_tensors(entries: dict[str, np.ndarray]) -> bytes:
    out = [MAGIC, struct.pack("<II", VERSION, len(entries))]
    for name, arr in entries.items():
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise FormatError(f"tensor name too long: {name[:40]}...")
        arr = np.asarray(arr)
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(out)


def decode_tensors(blob: bytes) -> dict[str, np.ndarray]:
    """Parse a whole checkpoint; any defect raises before anything is returned."""
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise FormatError(f"truncated checkpoint: {what} needs {n} bytes at offset {pos}, "
                              f"only {len(blob) - pos} left")
        chunk = blob[pos:pos + n]
        pos += n
        return chunk

    if take(8, "magic") != MAGIC:
        raise FormatError("bad magic at offset 0: not a checkpoint file")
    version, count = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported checkpoint version {version} at offset 8 (expected {VERSION})")
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        start = pos
        (n,) = struct.unpack("<H", take(2, "name length"))
        try:
            name = take(n, "name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"entry name at offset {start + 2} is not UTF-8") from exc
        if name in entries:
            raise FormatError(f"duplicate entry {name!r} at offset {start}")
        (rank,) = struct.unpack("<B", take(1, "rank"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "dims"))
        size = int(np.prod(dims, dtype=np.int64))
        values = np.frombuffer(take(4 * size, f"values of {name!r}"), dtype="<f4")
        entries[name] = values.astype(np.float64).reshape(dims)
    if pos != len(blob):
        raise FormatError(f"{len(blob) - pos} trailing bytes after the last entry at offset {pos}")
    return entries


def _meta_tensor(meta: dict) -> np.ndarray:
    return np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8).astype(np.float32)


def _read_meta(entries: dict[str, np.ndarray]) -> dict:
    if META not in entries:
        raise FormatError(f"checkpoint has no {META!r} entry")
    try:
        return json.loads(entries.pop(META).astype(np.uint8).tobytes().decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable {META!r} entry: {exc}") from exc


def model_entries(model) -> dict[str, np.ndarray]:
    if isinstance(model, SvmGrader):
        svm, tfidf = model.svm, model.tfidf
        sv = svm.support_vectors.tocoo()
        meta = {"kind": "svm", "config": model.config.__dict__, "features": tfidf.features, "n_docs": tfidf.n,
                "gamma": svm.gamma, "C": svm.C, "n_features": svm.n_features}
        return {
            META: _meta_tensor(meta),
            "tfidf.df": np.array([tfidf.df[w] for w in tfidf.features]),
            "svm.classes": svm.classes,
            "svm.coef": svm.coef,
            "svm.bias": svm.bias,
            "svm.sv.rows": sv.row,
            "svm.sv.cols": sv.col,
            "svm.sv.values": sv.data,
            "svm.sv.count": np.array([svm.support_vectors.shape[0]]),
        }
    meta = {"kind": model.kind, "config": model.config.to_dict(), "seed": model.seed,
            "vocab": model.vocab.words()}
    entries = {META: _meta_tensor(meta)}
    entries.update({p.name: p.data for p in model.parameters()})
    return entries


def model_from_entries(entries: dict[str, np.ndarray]):
    entries = dict(entries)
    meta = _read_meta(entries)
    kind = meta.get("kind")
    try:
        if kind == "svm":
            return _svm_from_entries(meta, entries)
        if kind not in NEURAL_KINDS:
            raise FormatError(f"unknown model kind {kind!r} in checkpoint")
        model = build_model(kind, Vocabulary(meta["vocab"]), config_from_dict(kind, meta["config"]), meta["seed"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"incomplete checkpoint metadata: {exc}") from exc
    params = {p.name: p for p in model.parameters()}
    if set(params) != set(entries):
        missing, extra = sorted(set(params) - set(entries)), sorted(set(entries) - set(params))
        raise FormatError(f"parameter set mismatch; missing {missing[:5]}, unexpected {extra[:5]}")
    for name, p in params.items():
        if entries[name].shape != p.shape:
            raise FormatError(f"{name}: stored shape {entries[name].shape} != model shape {p.shape}")
        p.data[...] = entries[name]
    return model


def _svm_from_entries(meta: dict, entries: dict[str, np.ndarray]) -> SvmGrader:
    features = meta["features"]
    df = {w: int(c) for w, c in zip(features, entries["tfidf.df"])}
    tfidf = TfidfModel(df, int(meta["n_docs"]), list(features))
    n_sv = int(entries["svm.sv.count"][0])
    sv = sp.csr_matrix((entries["svm.sv.values"], (entries["svm.sv.rows"].astype(np.int64),
                                                   entries["svm.sv.cols"].astype(np.int64))),
                       shape=(n_sv, int(meta["n_features"])))
    svm = SvmModel(entries["svm.classes"].astype(np.int64), sv, entries["svm.coef"], entries["svm.bias"],
                   float(meta["gamma"]), float(meta["C"]), int(meta["n_features"]))
    return SvmGrader(tfidf, svm, SvmConfig(**meta["config"]))


def save_checkpoint(model, path) -> None:
    Path(path).write_bytes(encode_tensors(model_entries(model)))


def load_checkpoint(path):
    return model_from_entries(decode_tensors(Path(path).read_bytes()))
