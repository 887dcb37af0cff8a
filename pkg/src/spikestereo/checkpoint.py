"""Binary checkpoint container and JSON config files.

Layout (all integers little-endian)::

    b"SNIR"                      magic
    u32 version
    u32 header length, header    UTF-8 JSON {"config": ..., "step": ..., "meta": ...}
    u32 blob count
    per blob:
        u16 name length, name    UTF-8
        u8 ndim, u32 * ndim      shape
        float32 LE * prod(shape) values

Parameters and buffers are stored under their module paths; optimizer
moments, when present, under ``optim.`` names.
"""

from __future__ import annotations

import io
import json
import os
import struct
from typing import Optional

import numpy as np

from .network import NetworkConfig, StereoRestorer

MAGIC = b"SNIR"
VERSION = 1
OPTIM_PREFIX = "optim."


class CheckpointError(IOError):
    """Unreadable, truncated or incompatible checkpoint file."""


def _write_blob(fh, name: str, arr: np.ndarray) -> None:
    raw = name.encode("utf-8")
    arr = np.asarray(arr)
    fh.write(struct.pack("<H", len(raw)))
    fh.write(raw)
    fh.write(struct.pack("<B", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError("checkpoint is truncated")
    return buf


def save_checkpoint(path, model: StereoRestorer, step: int = 0, optimizer=None, meta: Optional[dict] = None) -> None:
    """Write ``model`` (and optionally the optimizer state) to ``path`` atomically."""
    header = {"config": model.cfg.to_dict(), "step": int(step), "meta": meta or {}}
    blobs = dict(model.state_dict())
    if optimizer is not None:
        for k, v in optimizer.state_dict().items():
            blobs[OPTIM_PREFIX + k] = v
    buf = io.BytesIO()
    buf.write(MAGIC)
    hraw = json.dumps(header, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<II", VERSION, len(hraw)))
    buf.write(hraw)
    buf.write(struct.pack("<I", len(blobs)))
    for name in blobs:
        _write_blob(buf, name, blobs[name])
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def read_checkpoint(path) -> tuple[dict, dict]:
    """Return ``(header, blobs)`` without building a model."""
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise CheckpointError(f"cannot open checkpoint {os.fspath(path)!r}: {exc}") from exc
    with fh:
        if fh.read(4) != MAGIC:
            raise CheckpointError(f"{os.fspath(path)!r} is not a checkpoint (bad magic)")
        version, hlen = struct.unpack("<II", _read_exact(fh, 8))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        try:
            header = json.loads(_read_exact(fh, hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        blobs = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", _read_exact(fh, 2))
            name = _read_exact(fh, nlen).decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1))
            shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim))
            n = int(np.prod(shape, dtype=np.int64))
            blobs[name] = np.frombuffer(_read_exact(fh, 4 * n), dtype="<f4").reshape(shape).copy()
        if fh.read(1):
            raise CheckpointError("trailing bytes after the last blob")
    return header, blobs


def load_checkpoint(path) -> tuple[StereoRestorer, dict]:
    """Rebuild the model stored in ``path``.

    Returns the model and an info dict with ``step``, ``meta`` and
    ``optimizer`` (the optimizer state dict, or ``None``).
    """
    header, blobs = read_checkpoint(path)
    try:
        cfg = NetworkConfig.from_dict(header["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"checkpoint config is invalid: {exc}") from exc
    model = StereoRestorer(cfg)
    state = {k: v for k, v in blobs.items() if not k.startswith(OPTIM_PREFIX)}
    optim = {k[len(OPTIM_PREFIX):]: v for k, v in blobs.items() if k.startswith(OPTIM_PREFIX)}
    try:
        model.load_state_dict(state, strict=True)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"checkpoint does not match its config: {exc}") from exc
    info = {"step": int(header.get("step", 0)), "meta": header.get("meta", {}), "optimizer": optim or None}
    return model, info


def load_config(path) -> dict:
    """Read a JSON config file into a dict."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"config {os.fspath(path)!r} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError(f"config {os.fspath(path)!r} must hold a JSON object")
    return data


def save_config(path, data: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
