"""Minimal OKPF writer.

The exporter talks to downstream tooling purely through the OKPF wire
format, so it carries its own writer instead of importing one.

Layout: magic ``OKPF``, u8 version (1), then eleven little-endian u32
fields (h_f, w_f, c, src_w, src_h, patch, stride, raw_w, raw_h,
pad_left, pad_top), followed by the float32 little-endian payload in
row-major, channel-last order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"OKPF"
VERSION = 1
_HEADER = struct.Struct("<4sB11I")


@dataclass(frozen=True)
class ExportGeometry:
    """Header geometry accompanying an exported feature map."""

    src_w: int
    src_h: int
    patch: int
    stride: int
    raw_w: int
    raw_h: int
    pad_left: int
    pad_top: int

    def grid_shape(self) -> tuple[int, int]:
        h = (self.src_h - self.patch) // self.stride + 1
        w = (self.src_w - self.patch) // self.stride + 1
        return h, w


def feature_bytes(data: np.ndarray, geom: ExportGeometry) -> bytes:
    """Serialize an (h, w, c) float32 array plus geometry to OKPF bytes."""
    if data.ndim != 3:
        raise ValueError(f"expected (h, w, c) array, got shape {data.shape}")
    h, w, c = data.shape
    if (h, w) != geom.grid_shape():
        raise ValueError(
            f"array grid {(h, w)} does not satisfy the header formula "
            f"{geom.grid_shape()}"
        )
    if not np.isfinite(data).all():
        raise ValueError("feature payload contains non-finite values")
    header = _HEADER.pack(
        MAGIC, VERSION, h, w, c,
        geom.src_w, geom.src_h, geom.patch, geom.stride,
        geom.raw_w, geom.raw_h, geom.pad_left, geom.pad_top,
    )
    payload = np.ascontiguousarray(data, dtype="<f4")
    return header + payload.tobytes()


def write_feature_file(data: np.ndarray, geom: ExportGeometry, path) -> None:
    with open(path, "wb") as f:
        f.write(feature_bytes(data, geom))
