"""Single-channel volumes and the ``.vol`` file format.

File layout (all little-endian)::

    b"VOXSRV01"
    {"d": D, "h": H, "w": W, "spacing_mm": [sd, sh, sw], "label": null}\n
    D*H*W float32 values, row-major over (D, H, W)
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

MAGIC = b"VOXSRV01"
CLASS_LABELS = ("t1", "flair", "diffusion")


class VolFormatError(ValueError):
    """Base class for ``.vol`` decoding failures."""


class BadMagicError(VolFormatError):
    pass


class MalformedHeaderError(VolFormatError):
    pass


class TruncatedPayloadError(VolFormatError):
    pass


class PayloadSizeError(VolFormatError):
    """Payload longer than the header extents allow."""


@dataclass(frozen=True, eq=False)
class Volume:
    data: np.ndarray
    spacing_mm: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    label: Optional[str] = None

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float32, order="C")
        if arr.ndim != 3:
            raise ValueError(f"volume data must be 3D (D, H, W), got shape {arr.shape}")
        spacing = tuple(float(s) for s in self.spacing_mm)
        if len(spacing) != 3 or min(spacing) <= 0:
            raise ValueError(f"spacing_mm needs 3 positive values, got {self.spacing_mm}")
        if self.label is not None and self.label not in CLASS_LABELS:
            raise ValueError(f"label must be one of {CLASS_LABELS} or None, got {self.label!r}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing_mm", spacing)

    @property
    def extents(self) -> Tuple[int, int, int]:
        return tuple(self.data.shape)

    def replace(self, **kw) -> "Volume":
        fields = {"data": self.data, "spacing_mm": self.spacing_mm, "label": self.label}
        fields.update(kw)
        return Volume(**fields)

    def same_as(self, other: "Volume") -> bool:
        """Bitwise equality of data and metadata."""
        return (self.extents == other.extents and self.spacing_mm == other.spacing_mm
                and self.label == other.label
                and self.data.tobytes() == other.data.tobytes())


def write_vol(v: Volume, path) -> None:
    d, h, w = v.extents
    header = json.dumps({"d": d, "h": h, "w": w, "spacing_mm": list(v.spacing_mm), "label": v.label},
                        separators=(",", ":"))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(header.encode("utf-8") + b"\n")
        fh.write(v.data.astype("<f4").tobytes())


def read_vol(path) -> Volume:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise BadMagicError(f"{os.fspath(path)}: not a .vol file (magic {blob[:8]!r})")
    nl = blob.find(b"\n", 8)
    if nl < 0:
        raise MalformedHeaderError(f"{os.fspath(path)}: header line is not terminated")
    try:
        header = json.loads(blob[8:nl].decode("utf-8"))
        d, h, w = (int(header[k]) for k in ("d", "h", "w"))
        spacing = [float(s) for s in header["spacing_mm"]]
        label = header["label"]
    except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
        raise MalformedHeaderError(f"{os.fspath(path)}: bad header ({exc})") from None
    if min(d, h, w) < 0 or len(spacing) != 3:
        raise MalformedHeaderError(f"{os.fspath(path)}: bad extents or spacing in header")
    payload = blob[nl + 1:]
    need = d * h * w * 4
    if len(payload) < need:
        raise TruncatedPayloadError(
            f"{os.fspath(path)}: payload has {len(payload)} bytes, header needs {need}")
    if len(payload) > need:
        raise PayloadSizeError(
            f"{os.fspath(path)}: payload has {len(payload)} bytes but extents {(d, h, w)} need {need}")
    data = np.frombuffer(payload, dtype="<f4").reshape(d, h, w).astype(np.float32)
    try:
        return Volume(data, tuple(spacing), label)
    except ValueError as exc:
        raise MalformedHeaderError(f"{os.fspath(path)}: {exc}") from None


def normalize_minmax(v: Volume) -> Volume:
    """Affine map onto [0, 1]; constant volumes become all zeros."""
    x = v.data.astype(np.float64)
    lo, hi = x.min(), x.max()
    if hi == lo:
        return v.replace(data=np.zeros_like(v.data))
    return v.replace(data=(x - lo) / (hi - lo))
