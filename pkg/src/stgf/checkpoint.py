"""Checkpoint directory: a JSON manifest plus a float32 parameter blob.

Layout:

    manifest.json  format tag, model config, training config (with seed),
                   normalization stats, and a parameter table of
                   name/shape/offset entries (offsets in float32 elements)
    params.bin     little-endian float32, parameters concatenated flat in
                   manifest order

Values quantize to single precision on save, so one round trip perturbs
each entry by at most one float32 ulp and a second save reproduces the
first byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Parameter
from .data import NormStats
from .errors import LoadError
from .model import ModelConfig, ModelParams

CHECKPOINT_FORMAT = "stgf-checkpoint-v1"


@dataclass
class LoadedCheckpoint:
    params: ModelParams
    model_config: ModelConfig
    stats: NormStats
    train_config: dict
    manifest: dict


def save_checkpoint(
    params: ModelParams,
    model_config: ModelConfig,
    train_config: dict,
    stats: NormStats,
    path: str | Path,
) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)

    table = []
    offset = 0
    chunks = []
    for p in params:
        table.append({"name": p.name, "shape": list(p.value.shape), "offset": offset})
        offset += p.value.size
        chunks.append(p.value.reshape(-1))
    blob = np.concatenate(chunks).astype("<f4")

    manifest = {
        "format": CHECKPOINT_FORMAT,
        "model_config": model_config.to_dict(),
        "train_config": dict(train_config),
        "norm_stats": stats.to_dict(),
        "params": table,
        "total_size": int(offset),
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (root / "params.bin").write_bytes(blob.tobytes())


def load_checkpoint(path: str | Path) -> LoadedCheckpoint:
    root = Path(path)
    manifest_path = root / "manifest.json"
    blob_path = root / "params.bin"
    if not manifest_path.is_file():
        raise LoadError(f"{manifest_path}: missing manifest")
    if not blob_path.is_file():
        raise LoadError(f"{blob_path}: missing parameter blob")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise LoadError(f"{manifest_path}: invalid JSON ({exc})") from None

    tag = manifest.get("format")
    if tag != CHECKPOINT_FORMAT:
        raise LoadError(f"{manifest_path}: unknown format tag {tag!r}, expected {CHECKPOINT_FORMAT!r}")
    for key in ("model_config", "train_config", "norm_stats", "params", "total_size"):
        if key not in manifest:
            raise LoadError(f"{manifest_path}: missing key {key!r}")

    payload = blob_path.read_bytes()
    total = int(manifest["total_size"])
    if len(payload) != total * 4:
        raise LoadError(
            f"{blob_path}: expected {total * 4} bytes for {total} float32 values, got {len(payload)}"
        )
    flat = np.frombuffer(payload, dtype="<f4").astype(np.float64)

    params = ModelParams()
    cursor = 0
    for entry in manifest["params"]:
        try:
            name, shape, offset = entry["name"], tuple(entry["shape"]), int(entry["offset"])
        except (KeyError, TypeError) as exc:
            raise LoadError(f"{manifest_path}: malformed parameter entry {entry} ({exc})") from None
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if offset != cursor or offset + size > total:
            raise LoadError(
                f"{manifest_path}: parameter {name!r} spans [{offset}, {offset + size}) "
                f"but the blob cursor is at {cursor} of {total}"
            )
        params.add(Parameter(name, flat[offset : offset + size].reshape(shape)))
        cursor += size
    if cursor != total:
        raise LoadError(f"{manifest_path}: parameter table covers {cursor} of {total} values")

    return LoadedCheckpoint(
        params=params,
        model_config=ModelConfig.from_dict(manifest["model_config"]),
        stats=NormStats.from_dict(manifest["norm_stats"]),
        train_config=dict(manifest["train_config"]),
        manifest=manifest,
    )
