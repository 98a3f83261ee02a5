"""Single-file model checkpoints.

Layout::

    bytes 0..7      header length N, unsigned 64-bit little-endian
    bytes 8..8+N    UTF-8 JSON header
    rest            parameter blocks, float64 little-endian, C order,
                    concatenated in the order of header["params"]

Header keys: ``format`` ("logshield-checkpoint"), ``version`` (1), ``kind``
("transformer" or "lstm"), ``config`` (model config), ``vocab`` (token list),
``vocab_sha256``, ``step`` (optimizer steps taken), ``params`` (list of
``{"name", "shape"}``) and ``extra`` (free-form, e.g. the temporal window).
"""
from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from .embedding import Vocabulary
from .lstm import LstmClassifier, LstmConfig
from .transformer import ModelConfig, TransformerClassifier

FORMAT = "logshield-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, model, vocab: Vocabulary, step: int = 0, extra: dict | None = None) -> None:
    names = list(model.params)
    header = {
        "format": FORMAT,
        "version": VERSION,
        "kind": model.kind,
        "config": model.cfg.to_dict(),
        "vocab": list(vocab.tokens),
        "vocab_sha256": vocab.sha256(),
        "step": int(step),
        "params": [{"name": n, "shape": list(model.params[n].shape)} for n in names],
        "extra": extra or {},
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(struct.pack("<Q", len(hb)))
            f.write(hb)
            for n in names:
                f.write(np.ascontiguousarray(model.params[n], dtype="<f8").tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_header(path) -> dict:
    with open(path, "rb") as f:
        raw = f.read(8)
        if len(raw) != 8:
            raise CheckpointError(f"{path}: truncated checkpoint")
        (n,) = struct.unpack("<Q", raw)
        if n > os.fstat(f.fileno()).st_size - 8:
            raise CheckpointError(f"{path}: not a checkpoint (bad header length)")
        try:
            header = json.loads(f.read(n).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise CheckpointError(f"{path}: unreadable checkpoint header") from None
    if header.get("format") != FORMAT:
        raise CheckpointError(f"{path}: not a {FORMAT} file")
    return header


def load_checkpoint(path, dtype: str | None = None):
    """Return ``(model, vocab, header)``; parameters are cast to ``dtype`` if given."""
    header = read_header(path)
    vocab = Vocabulary(tuple(header["vocab"]))
    if vocab.sha256() != header["vocab_sha256"]:
        raise CheckpointError(f"{path}: vocabulary hash mismatch")
    cfg_d = dict(header["config"])
    if dtype is not None:
        cfg_d["dtype"] = dtype
    if header["kind"] == "transformer":
        model = TransformerClassifier(ModelConfig(**cfg_d))
    elif header["kind"] == "lstm":
        model = LstmClassifier(LstmConfig(**cfg_d))
    else:
        raise CheckpointError(f"{path}: unknown model kind {header['kind']!r}")
    with open(path, "rb") as f:
        f.seek(8 + struct.unpack("<Q", f.read(8))[0])
        blob = f.read()
    offset = 0
    for spec in header["params"]:
        name, shape = spec["name"], tuple(spec["shape"])
        if name not in model.params or model.params[name].shape != shape:
            raise CheckpointError(f"{path}: parameter {name!r} does not match the model config")
        size = int(np.prod(shape)) * 8
        if offset + size > len(blob):
            raise CheckpointError(f"{path}: truncated parameter data")
        arr = np.frombuffer(blob, dtype="<f8", count=int(np.prod(shape)), offset=offset).reshape(shape)
        model.params[name][...] = arr
        offset += size
    if offset != len(blob):
        raise CheckpointError(f"{path}: trailing bytes after parameter data")
    return model, vocab, header
