"""Binary checkpoint format.

Layout (little-endian)::

    b"VOXSRCK1"                      magic
    u8                               format version (1)
    u32 + bytes                      JSON metadata: kind, step, config echo
    u32                              record count
    per record:
        u16 + bytes                  UTF-8 tensor name
        u8 ndim, ndim * u32          shape
        prod(shape) * f32            values, row-major
"""
from __future__ import annotations

import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

MAGIC = b"VOXSRCK1"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    kind: str
    config: dict
    tensors: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)
    step: int = 0
    meta: dict = field(default_factory=dict)

    def subset(self, prefix: str) -> Dict[str, np.ndarray]:
        n = len(prefix)
        return {k[n:]: v for k, v in self.tensors.items() if k.startswith(prefix)}

    def same_as(self, other: "Checkpoint") -> bool:
        return to_bytes(self) == to_bytes(other)


def to_bytes(ck: Checkpoint) -> bytes:
    header = json.dumps({"kind": ck.kind, "step": ck.step, "config": ck.config, "meta": ck.meta},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<B", FORMAT_VERSION), struct.pack("<I", len(header)), header,
             struct.pack("<I", len(ck.tensors))]
    for name, arr in ck.tensors.items():
        nb = name.encode("utf-8")
        arr = np.asarray(arr)
        parts.append(struct.pack("<H", len(nb)) + nb)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def from_bytes(blob: bytes) -> Checkpoint:
    if blob[:8] != MAGIC:
        raise CheckpointError(f"not a checkpoint (magic {blob[:8]!r})")
    try:
        (version,) = struct.unpack_from("<B", blob, 8)
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (hlen,) = struct.unpack_from("<I", blob, 9)
        pos = 13
        header = json.loads(blob[pos:pos + hlen].decode("utf-8"))
        pos += hlen
        (count,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        tensors = OrderedDict()
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            name = blob[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, pos)
            pos += 4 * ndim
            n = int(np.prod(shape)) if ndim else 1
            if pos + 4 * n > len(blob):
                raise CheckpointError(f"truncated tensor record {name!r}")
            tensors[name] = np.frombuffer(blob, dtype="<f4", count=n, offset=pos).reshape(shape).astype(np.float32)
            pos += 4 * n
        if pos != len(blob):
            raise CheckpointError(f"{len(blob) - pos} unexpected trailing bytes after the last tensor record")
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from None
    return Checkpoint(header["kind"], header["config"], tensors, int(header["step"]), header.get("meta", {}))


def save_checkpoint(ck: Checkpoint, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(ck))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
