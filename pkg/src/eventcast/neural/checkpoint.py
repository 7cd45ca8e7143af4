"""Deterministic model checkpoints.

A checkpoint is a magic line, a canonical-JSON header (config, vocabulary
hash, seed, metadata and the tensor directory) and the raw little-endian
float32 tensor bytes in sorted-name order.  The same model always
serializes to the same bytes; loading restores bit-identical predictions
because trained parameters are canonicalized to float32 precision.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict

import numpy as np

from ..errors import CompatibilityError, ParseError
from .models import (
    AttentionConfig,
    RecurrentConfig,
    RecurrentForecaster,
    SelfAttentionForecaster,
    SequenceForecaster,
)

MAGIC = b"eventcast-checkpoint\n"
FORMAT_VERSION = 1

_CONFIG_TYPES = {
    "self_attn": (AttentionConfig, SelfAttentionForecaster),
    "bilstm": (RecurrentConfig, RecurrentForecaster),
    "lstm_attn": (RecurrentConfig, RecurrentForecaster),
}


def save_checkpoint(
    model: SequenceForecaster, path, vocab_sha256: str = ""
) -> None:
    names = sorted(model.params)
    header = {
        "version": FORMAT_VERSION,
        "model_type": model.model_type,
        "config": asdict(model.config),
        "seed": model.config.seed,
        "vocab_sha256": vocab_sha256,
        "metadata": model.metadata,
        "tensors": [
            {"name": name, "shape": list(model.params[name].shape), "dtype": "float32"}
            for name in names
        ],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(blob + b"\n")
        for name in names:
            handle.write(
                np.ascontiguousarray(model.params[name], dtype="<f4").tobytes()
            )


def load_checkpoint(path, expected_vocab_sha256: str | None = None) -> SequenceForecaster:
    with open(path, "rb") as handle:
        if handle.read(len(MAGIC)) != MAGIC:
            raise ParseError(f"not a checkpoint file: {path}")
        header = json.loads(handle.readline().decode("utf-8"))
        if header.get("version") != FORMAT_VERSION:
            raise ParseError(f"unsupported checkpoint version in {path}")
        if (
            expected_vocab_sha256 is not None
            and header["vocab_sha256"] != expected_vocab_sha256
        ):
            raise CompatibilityError(
                "checkpoint was trained against a different vocabulary"
            )
        model_type = header["model_type"]
        if model_type not in _CONFIG_TYPES:
            raise ParseError(f"unknown model type {model_type!r} in {path}")
        config_cls, model_cls = _CONFIG_TYPES[model_type]
        model = model_cls(config_cls(**header["config"]))
        model.metadata = header["metadata"]
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = handle.read(count * 4)
            if len(raw) != count * 4:
                raise ParseError(f"truncated tensor {entry['name']!r} in {path}")
            model.params[entry["name"]] = (
                np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)
            )
    return model


def checkpoint_vocab_sha256(path) -> str:
    with open(path, "rb") as handle:
        if handle.read(len(MAGIC)) != MAGIC:
            raise ParseError(f"not a checkpoint file: {path}")
        return json.loads(handle.readline().decode("utf-8"))["vocab_sha256"]


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
