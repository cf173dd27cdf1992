"""Self-describing, byte-deterministic checkpoint container.

A checkpoint is a single JSON file: format version, a config echo, free-form
metadata, and named tensors stored as base64 little-endian buffers. JSON with
sorted keys keeps two same-seed training runs byte-identical, which
torch.save's zip container does not guarantee.
"""

from __future__ import annotations

import base64
import hashlib
import json

import numpy as np
import torch

FORMAT_VERSION = 1

_DTYPES = {"float32": np.float32, "float64": np.float64, "int64": np.int64}


class CheckpointError(ValueError):
    """Unreadable or incompatible checkpoint file."""


def _encode_tensor(value) -> dict:
    arr = value.detach().cpu().numpy() if isinstance(value, torch.Tensor) else np.asarray(value)
    dtype = str(arr.dtype)
    if dtype not in _DTYPES:
        raise CheckpointError(f"unsupported tensor dtype {dtype}")
    buf = np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes()
    return {
        "dtype": dtype,
        "shape": list(arr.shape),
        "data": base64.b64encode(buf).decode("ascii"),
    }


def _decode_tensor(entry: dict) -> np.ndarray:
    dtype = _DTYPES.get(entry["dtype"])
    if dtype is None:
        raise CheckpointError(f"unsupported tensor dtype {entry['dtype']}")
    buf = base64.b64decode(entry["data"])
    arr = np.frombuffer(buf, dtype=np.dtype(dtype).newbyteorder("<"))
    return arr.reshape(entry["shape"]).astype(dtype)


def save_checkpoint(path, config: dict, tensors: dict, extra: dict | None = None) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "config": config,
        "extra": extra or {},
        "tensors": {name: _encode_tensor(t) for name, t in tensors.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))


def load_checkpoint(path) -> tuple[dict, dict, dict]:
    """Returns (config, tensors-as-numpy, extra)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format_version {version}")
    tensors = {name: _decode_tensor(entry) for name, entry in payload["tensors"].items()}
    return payload["config"], tensors, payload.get("extra", {})


def checkpoint_hash(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def state_dict_to_tensors(state_dict: dict) -> dict:
    return {name: value for name, value in state_dict.items()}


def tensors_to_state_dict(tensors: dict) -> dict:
    return {name: torch.from_numpy(np.array(value)) for name, value in tensors.items()}
