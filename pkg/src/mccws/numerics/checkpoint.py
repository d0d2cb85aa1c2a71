"""Checkpoint directory: ``manifest.json`` plus one little-endian float32 file per parameter."""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .tensor import FULL, Tensor

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
TENSOR_DIR = "tensors"


class CheckpointError(IOError):
    pass


def _filename(name: str) -> str:
    return name.replace(os.sep, "_") + ".f32"


def save_checkpoint(path: str | os.PathLike, params: Mapping[str, Tensor], meta: Mapping[str, Any] | None = None) -> Path:
    root = Path(path)
    (root / TENSOR_DIR).mkdir(parents=True, exist_ok=True)
    entries = []
    for name, t in params.items():
        fname = _filename(name)
        payload = np.ascontiguousarray(t.data, dtype="<f4")
        (root / TENSOR_DIR / fname).write_bytes(payload.tobytes())
        entries.append({"name": name, "shape": list(t.shape), "precision": t.precision, "file": fname})
    manifest = {"format": FORMAT_VERSION, "dtype": "float32-le", "params": entries, "meta": dict(meta or {})}
    (root / MANIFEST).write_text(json.dumps(manifest, ensure_ascii=False, indent=1, sort_keys=True), encoding="utf-8")
    return root


def load_checkpoint(path: str | os.PathLike, dtype=np.float64) -> tuple[dict[str, Tensor], dict[str, Any]]:
    root = Path(path)
    try:
        manifest = json.loads((root / MANIFEST).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint manifest under {root}: {exc}") from exc
    if manifest.get("format") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {manifest.get('format')!r} (expected {FORMAT_VERSION})")
    params: dict[str, Tensor] = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        try:
            raw = (root / TENSOR_DIR / entry["file"]).read_bytes()
        except OSError as exc:
            raise CheckpointError(f"missing payload for {entry['name']}: {exc}") from exc
        arr = np.frombuffer(raw, dtype="<f4")
        if arr.size != int(np.prod(shape)):
            raise CheckpointError(f"payload for {entry['name']} has {arr.size} values, manifest says {shape}")
        params[entry["name"]] = Tensor(arr.reshape(shape).astype(dtype), precision=entry.get("precision", FULL))
    return params, manifest.get("meta", {})
