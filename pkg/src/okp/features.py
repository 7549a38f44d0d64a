"""Feature-map container, OKPF binary format, and grid/pixel coordinate maps.

A feature map is an h_f x w_f grid of C-dimensional descriptors produced by a
patch-based backbone (patch size p, stride s) from a model-input image of
src_w x src_h pixels.  The grid shape always satisfies
``floor((src - p) / s) + 1`` per axis.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    MissingRawGeometry,
    NonFiniteValue,
    OutOfBounds,
    ShapeMismatch,
    TruncatedPayload,
    UnsupportedVersion,
)

OKPF_MAGIC = b"OKPF"
OKPF_VERSION = 1
# magic + u8 version + 11 little-endian u32 geometry/shape fields
_HEADER_FMT = "<4sB11I"
HEADER_SIZE = struct.calcsize(_HEADER_FMT)


def grid_shape(src_h: int, src_w: int, patch: int, stride: int) -> tuple[int, int]:
    """Grid rows/cols produced by a patch backbone on a src_h x src_w input."""
    return (src_h - patch) // stride + 1, (src_w - patch) // stride + 1


@dataclass(frozen=True)
class GridGeometry:
    """Source-image geometry of a feature grid.

    raw_w/raw_h describe the original pre-pad image; 0/None means unknown.
    pad_left/pad_top is the padding applied before the square resize.
    """

    src_w: int
    src_h: int
    patch: int
    stride: int
    raw_w: int = 0
    raw_h: int = 0
    pad_left: int = 0
    pad_top: int = 0

    def __post_init__(self) -> None:
        if self.patch < 1 or self.stride < 1 or self.stride > self.patch:
            raise ShapeMismatch(
                f"bad patch/stride: patch={self.patch} stride={self.stride}"
            )

    @property
    def has_raw(self) -> bool:
        return self.raw_w > 0 and self.raw_h > 0

    def grid_shape(self) -> tuple[int, int]:
        return grid_shape(self.src_h, self.src_w, self.patch, self.stride)


@dataclass(frozen=True, order=True)
class GridIndex:
    """A grid cell (row, col)."""

    row: int
    col: int

    def flat(self, w_f: int) -> int:
        return self.row * w_f + self.col


class FeatureMap:
    """Immutable dense grid of float32 descriptors with geometry metadata."""

    def __init__(self, data: np.ndarray, geom: GridGeometry):
        data = np.ascontiguousarray(data, dtype=np.float32)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ShapeMismatch(f"expected (h, w, c) array, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise NonFiniteValue("feature map contains NaN/Inf")
        if geom.grid_shape() != data.shape[:2]:
            raise ShapeMismatch(
                f"geometry implies grid {geom.grid_shape()}, data is {data.shape[:2]}"
            )
        data.setflags(write=False)
        self.data = data
        self.geom = geom

    @property
    def h_f(self) -> int:
        return self.data.shape[0]

    @property
    def w_f(self) -> int:
        return self.data.shape[1]

    @property
    def c(self) -> int:
        return self.data.shape[2]

    def flat_view(self) -> np.ndarray:
        """(h_f * w_f, c) row-major view."""
        return self.data.reshape(-1, self.c)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureMap):
            return NotImplemented
        return self.geom == other.geom and np.array_equal(self.data, other.data)


def write_feature_bytes(fmap: FeatureMap) -> bytes:
    g = fmap.geom
    header = struct.pack(
        _HEADER_FMT,
        OKPF_MAGIC,
        OKPF_VERSION,
        fmap.h_f,
        fmap.w_f,
        fmap.c,
        g.src_w,
        g.src_h,
        g.patch,
        g.stride,
        g.raw_w,
        g.raw_h,
        g.pad_left,
        g.pad_top,
    )
    payload = fmap.data.astype("<f4").tobytes()
    return header + payload


def read_feature_bytes(blob: bytes) -> FeatureMap:
    if len(blob) < HEADER_SIZE:
        if not blob.startswith(OKPF_MAGIC):
            raise BadMagic("not an OKPF file")
        raise TruncatedPayload("file shorter than OKPF header")
    magic, version, h, w, c, src_w, src_h, patch, stride, raw_w, raw_h, pl, pt = (
        struct.unpack_from(_HEADER_FMT, blob)
    )
    if magic != OKPF_MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != OKPF_VERSION:
        raise UnsupportedVersion(f"OKPF version {version}")
    expected = h * w * c * 4
    payload = blob[HEADER_SIZE:]
    if len(payload) != expected:
        raise TruncatedPayload(
            f"header declares {expected} payload bytes, file has {len(payload)}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(h, w, c)
    if not np.isfinite(data).all():
        raise NonFiniteValue("payload contains NaN/Inf")
    geom = GridGeometry(src_w, src_h, patch, stride, raw_w, raw_h, pl, pt)
    return FeatureMap(data.copy(), geom)


def write_feature_file(fmap: FeatureMap, path) -> None:
    with open(path, "wb") as f:
        f.write(write_feature_bytes(fmap))


def read_feature_file(path) -> FeatureMap:
    with open(path, "rb") as f:
        return read_feature_bytes(f.read())


def cell_center(idx: GridIndex, geom: GridGeometry) -> tuple[float, float]:
    """Patch-center pixel coordinates (u, v) of a grid cell."""
    half = (geom.patch - 1) / 2.0
    return idx.col * geom.stride + half, idx.row * geom.stride + half


def grid_to_pixel(idx: GridIndex, geom: GridGeometry) -> tuple[float, float]:
    h, w = geom.grid_shape()
    if not (0 <= idx.row < h and 0 <= idx.col < w):
        raise OutOfBounds(f"cell {idx} outside {h}x{w} grid")
    return cell_center(idx, geom)


def pixel_to_grid(u: float, v: float, geom: GridGeometry) -> GridIndex:
    """Nearest-patch-center grid cell of a model-input pixel, clamped."""
    if not (0 <= u < geom.src_w and 0 <= v < geom.src_h):
        raise OutOfBounds(f"({u}, {v}) outside {geom.src_w}x{geom.src_h} input")
    h, w = geom.grid_shape()
    half = (geom.patch - 1) / 2.0
    col = math.floor((u - half) / geom.stride + 0.5)
    row = math.floor((v - half) / geom.stride + 0.5)
    return GridIndex(min(max(row, 0), h - 1), min(max(col, 0), w - 1))


def scale_to_raw(u: float, v: float, geom: GridGeometry) -> tuple[float, float]:
    """Map model-input coordinates back to the original (pre-pad) image."""
    if not geom.has_raw:
        raise MissingRawGeometry("feature map carries no raw-image geometry")
    factor = max(geom.raw_w, geom.raw_h) / geom.src_w
    return u * factor - geom.pad_left, v * factor - geom.pad_top
