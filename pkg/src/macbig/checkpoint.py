"""Binary checkpoint: magic, manifest, raw float32 blocks.

Layout::

    8 bytes   b"MACBIG01"
    4 bytes   manifest length, little-endian uint32
    N bytes   manifest, UTF-8 JSON (format version, hyperparameters,
              vocabulary, and one {name, shape, offset, nbytes} per tensor)
    rest      little-endian float32 blocks in manifest order; offsets are
              relative to the first byte after the manifest
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import HyperParams, MacbigParams, from_named

MAGIC = b"MACBIG01"
FORMAT_VERSION = 1
_LE_F32 = np.dtype("<f4")


class CheckpointError(ValueError):
    """Unreadable checkpoint. ``code`` is one of the class constants."""

    BAD_MAGIC = "bad_magic"
    TRUNCATED = "truncated"
    INCONSISTENT = "inconsistent"

    def __init__(self, code, msg):
        super().__init__(msg)
        self.code = code


def to_bytes(params: MacbigParams, hp: HyperParams, vocab=None) -> bytes:
    layers, blocks, offset = [], [], 0
    for name, t in params.named().items():
        raw = np.ascontiguousarray(t, dtype=_LE_F32).tobytes()
        layers.append({"name": name, "shape": list(t.shape), "offset": offset, "nbytes": len(raw)})
        blocks.append(raw)
        offset += len(raw)
    manifest = {
        "format_version": FORMAT_VERSION,
        "dtype": "float32-le",
        "hyperparams": hp.to_dict(),
        "vocab": None if vocab is None else list(vocab.words if hasattr(vocab, "words") else vocab),
        "layers": layers,
    }
    text = json.dumps(manifest, indent=1, sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<I", len(text)) + text + b"".join(blocks)


def save(path, params: MacbigParams, hp: HyperParams, vocab=None):
    Path(path).write_bytes(to_bytes(params, hp, vocab))


def from_bytes(blob: bytes):
    """Parse a checkpoint; returns (params, hp, vocab word list or None)."""
    if len(blob) < len(MAGIC) or blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(CheckpointError.BAD_MAGIC, "bad magic: not a checkpoint file")
    if len(blob) < len(MAGIC) + 4:
        raise CheckpointError(CheckpointError.TRUNCATED, "truncated checkpoint: no manifest length")
    (mlen,) = struct.unpack_from("<I", blob, len(MAGIC))
    start = len(MAGIC) + 4
    if start + mlen > len(blob):
        raise CheckpointError(CheckpointError.TRUNCATED, "truncated checkpoint: manifest runs past end of file")
    try:
        manifest = json.loads(blob[start : start + mlen].decode("utf-8"))
        version = manifest["format_version"]
        layers = manifest["layers"]
        hp = HyperParams.from_dict(manifest["hyperparams"])
    except (ValueError, KeyError, TypeError) as e:
        raise CheckpointError(CheckpointError.INCONSISTENT, f"unreadable manifest: {e}") from None
    if version != FORMAT_VERSION:
        raise CheckpointError(CheckpointError.INCONSISTENT, f"unsupported format version {version}")
    data = memoryview(blob)[start + mlen :]
    tensors, expected = {}, 0
    for entry in layers:
        name, shape, offset, nbytes = entry["name"], tuple(entry["shape"]), entry["offset"], entry["nbytes"]
        if offset + nbytes > len(data):
            raise CheckpointError(CheckpointError.TRUNCATED,
                                  f"truncated checkpoint: {name} ends at byte {offset + nbytes} of {len(data)}")
        if offset != expected or nbytes != 4 * int(np.prod(shape, dtype=np.int64)):
            raise CheckpointError(CheckpointError.INCONSISTENT,
                                  f"{name}: shape {shape} / offset {offset} / nbytes {nbytes} disagree")
        tensors[name] = np.frombuffer(data[offset : offset + nbytes], dtype=_LE_F32).astype(np.float32).reshape(shape)
        expected = offset + nbytes
    if expected != len(data):
        raise CheckpointError(CheckpointError.INCONSISTENT, f"{len(data) - expected} unexpected trailing bytes")
    try:
        params = from_named(hp, tensors)
    except (KeyError, ValueError) as e:
        raise CheckpointError(CheckpointError.INCONSISTENT, f"parameters do not fit hyperparameters: {e}") from None
    if len(tensors) != len(params.named()):
        raise CheckpointError(CheckpointError.INCONSISTENT, "unexpected extra tensors in manifest")
    return params, hp, manifest.get("vocab")


def load(path):
    return from_bytes(Path(path).read_bytes())
