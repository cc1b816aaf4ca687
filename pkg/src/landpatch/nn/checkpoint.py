"""Checkpoint container (.dtck): JSON header plus raw float64 weight blocks.

File layout: magic ``DTCK``, little-endian uint64 header length, UTF-8
JSON header, then the weight arrays as C-order little-endian float64 in
header-declared order. The header records a SHA-256 of the weight bytes;
load verifies it, so truncation or corruption fails loudly.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import CheckpointError, DataError
from .model import ModelSpec
from .ops import forward
from .train import EpochStats, TrainConfig

MAGIC = b"DTCK"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    model_spec: ModelSpec
    weights: dict[str, np.ndarray]
    label_order: tuple[str, str]
    train_config: TrainConfig
    history: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    format_version: int = FORMAT_VERSION


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> Path:
    out = Path(path)
    names = sorted(ckpt.weights)
    blob = b"".join(np.ascontiguousarray(ckpt.weights[n], dtype="<f8").tobytes() for n in names)
    header = {
        "format_version": ckpt.format_version,
        "model_spec": ckpt.model_spec.to_dict(),
        "train_config": json.loads(ckpt.train_config.to_json()),
        "label_order": list(ckpt.label_order),
        "history": [s.to_dict() for s in ckpt.history],
        "best_epoch": ckpt.best_epoch,
        "weights": [{"name": n, "shape": list(ckpt.weights[n].shape)} for n in names],
        "checksum": hashlib.sha256(blob).hexdigest(),
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(out, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(head)))
        f.write(head)
        f.write(blob)
    return out


def load_checkpoint(path: str | Path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<Q", raw[4:12])
    if len(raw) < 12 + hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}, expected {FORMAT_VERSION}")

    blob = raw[12 + hlen :]
    if hashlib.sha256(blob).hexdigest() != header["checksum"]:
        raise CheckpointError(f"{path}: weight checksum mismatch (file corrupt or truncated)")

    weights: dict[str, np.ndarray] = {}
    offset = 0
    for entry in header["weights"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        size = count * 8
        if offset + size > len(blob):
            raise CheckpointError(f"{path}: weight block {entry['name']} overruns file")
        weights[entry["name"]] = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        offset += size

    return Checkpoint(
        model_spec=ModelSpec.from_dict(header["model_spec"]),
        weights=weights,
        label_order=tuple(header["label_order"]),
        train_config=TrainConfig(**header["train_config"]),
        history=[EpochStats.from_dict(d) for d in header["history"]],
        best_epoch=header.get("best_epoch", 0),
        format_version=version,
    )


def predict_batch(ckpt: Checkpoint, imgs: np.ndarray) -> np.ndarray:
    """Eval-mode probabilities for a uint8 (N, H, W, C) stack."""
    if imgs.ndim != 4:
        raise DataError(f"expected a batch of images, got shape {imgs.shape}")
    x = imgs.astype(np.float64) / 255.0
    probs, _ = forward(ckpt.model_spec, ckpt.weights, x, mode="eval")
    return probs


def predict_proba(ckpt: Checkpoint, img: np.ndarray) -> tuple[float, float]:
    """(p_negative, p_positive) for one uint8 image; order per label_order."""
    probs = predict_batch(ckpt, img[None, ...])
    return float(probs[0, 0]), float(probs[0, 1])
