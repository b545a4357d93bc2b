"""Versioned binary checkpoints: model config, named float64 parameter blobs,
optimizer moments, and a trailing SHA-256 over everything before it.

Layout: MAGIC | u32 version | u64 header length | JSON header | blobs | sha256.
The header lists every blob's name, kind, and shape in write order; blobs are
little-endian float64.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"TSASRCKP"
VERSION = 1


def save_checkpoint(path, config: dict, params: dict, opt_state: dict | None = None,
                    step: int = 0, extra: dict | None = None) -> None:
    """Write params (name -> ndarray) and optional AdamW state atomically."""
    path = Path(path)
    blobs = [("param", name, np.asarray(arr, dtype=np.float64)) for name, arr in params.items()]
    header_opt = None
    if opt_state is not None:
        for kind in ("m", "v"):
            for name, arr in opt_state[kind].items():
                blobs.append((kind, name, np.asarray(arr, dtype=np.float64)))
        header_opt = {"step": int(opt_state["step"])}

    header = {
        "version": VERSION,
        "config": config,
        "step": int(step),
        "opt": header_opt,
        "extra": extra or {},
        "blobs": [
            {"kind": kind, "name": name, "shape": list(arr.shape)} for kind, name, arr in blobs
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    payload = bytearray()
    payload += MAGIC
    payload += struct.pack("<I", VERSION)
    payload += struct.pack("<Q", len(header_bytes))
    payload += header_bytes
    for _, _, arr in blobs:
        payload += arr.astype("<f8").tobytes()
    payload += hashlib.sha256(payload).digest()

    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(payload)
    tmp.replace(path)


def load_checkpoint(path) -> dict:
    """Read a checkpoint; returns {config, step, params, opt_state, extra}."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < len(MAGIC) + 12 + 32 or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path} failed its integrity checksum")

    off = len(MAGIC)
    (version,) = struct.unpack_from("<I", raw, off)
    off += 4
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (hlen,) = struct.unpack_from("<Q", raw, off)
    off += 8
    try:
        header = json.loads(raw[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header in {path}") from exc
    off += hlen

    params: dict = {}
    moments = {"m": {}, "v": {}}
    for entry in header["blobs"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(shape).copy()
        off += 8 * n
        if entry["kind"] == "param":
            params[entry["name"]] = arr
        else:
            moments[entry["kind"]][entry["name"]] = arr
    if off != len(body):
        raise CheckpointError(f"checkpoint {path} has trailing or missing blob bytes")

    opt_state = None
    if header.get("opt") is not None:
        opt_state = {"m": moments["m"], "v": moments["v"], "step": int(header["opt"]["step"])}
    return {
        "config": header["config"],
        "step": int(header["step"]),
        "params": params,
        "opt_state": opt_state,
        "extra": header.get("extra", {}),
    }
