"""Checkpoint files.

Layout::

    b"ASTA3D-CKPT-1\\n"
    uint64 little-endian: manifest length in bytes
    manifest: UTF-8 JSON {"tensors": {name: {"shape", "dtype", "offset"}}, "meta": {...}}
    raw little-endian float64 buffers; offsets count from the end of the manifest
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

MAGIC = b"ASTA3D-CKPT-1\n"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, arrays, meta=None):
    tensors, offset, blobs = {}, 0, []
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name], dtype="<f8")
        tensors[name] = {"shape": list(a.shape), "dtype": "float64", "offset": offset}
        blobs.append(a.tobytes())
        offset += a.nbytes
    manifest = json.dumps({"tensors": tensors, "meta": meta or {}}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    """Return ``(arrays, meta)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    pos = len(MAGIC)
    if len(raw) < pos + 8:
        raise CheckpointError(f"{path}: truncated header")
    (mlen,) = struct.unpack_from("<Q", raw, pos)
    pos += 8
    try:
        manifest = json.loads(raw[pos:pos + mlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable manifest") from exc
    body = raw[pos + mlen:]
    arrays = {}
    for name, info in manifest["tensors"].items():
        n = int(np.prod(info["shape"], dtype=np.int64))
        start = info["offset"]
        if start + 8 * n > len(body):
            raise CheckpointError(f"{path}: truncated buffer for {name}")
        arrays[name] = np.frombuffer(body, dtype="<f8", count=n, offset=start).reshape(info["shape"]).copy()
    return arrays, manifest.get("meta", {})


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
