"""Named-tensor checkpoint files.

Layout (all integers little-endian)::

    magic        8 bytes   b"CGTJCKPT"
    version      uint32    currently 1
    meta_len     uint32    length of the UTF-8 JSON metadata block
    meta         meta_len bytes
    count        uint32    number of tensors
    count times:
        name_len uint16
        name     name_len bytes, UTF-8
        ndim     uint8
        dims     ndim x uint64
        data     prod(dims) x float64 (little-endian, row-major)
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

MAGIC = b"CGTJCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, tensors: dict[str, torch.Tensor], meta: dict | None = None) -> None:
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(meta_bytes)), meta_bytes, struct.pack("<I", len(tensors))]
    for name in sorted(tensors):
        arr = np.array(tensors[name].detach().cpu().numpy(), dtype="<f8", order="C")
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw_name)) + raw_name + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> tuple[dict[str, torch.Tensor], dict]:
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    try:
        return _parse(buf)
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        if isinstance(exc, CheckpointError):
            raise CheckpointError(f"{path}: {exc}") from None
        raise CheckpointError(f"{path}: truncated or corrupt ({exc})") from exc


def _parse(buf: bytes) -> tuple[dict[str, torch.Tensor], dict]:
    pos = 8
    version, meta_len = struct.unpack_from("<II", buf, pos)
    pos += 8
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}")
    meta = json.loads(buf[pos:pos + meta_len].decode("utf-8"))
    pos += meta_len
    (count,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = struct.unpack_from("<B", buf, pos)
        pos += 1
        dims = struct.unpack_from(f"<{ndim}Q", buf, pos)
        pos += 8 * ndim
        n = int(np.prod(dims)) if ndim else 1
        arr = np.frombuffer(buf, dtype="<f8", count=n, offset=pos).reshape(dims).copy()
        pos += 8 * n
        tensors[name] = torch.from_numpy(arr)
    if pos != len(buf):
        raise CheckpointError(f"{len(buf) - pos} trailing bytes")
    return tensors, meta
