"""One-shot prototype learning from an annotated support feature map.

Keypoint prototypes are enhanced descriptors read at annotated cells; edge
prototypes describe the feature distribution along the segment between two
keypoints as a fixed number of averaged sub-segment descriptors.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .enhance import BIN_FACTOR, EnhanceConfig, enhance
from .errors import (
    BadMagic,
    DuplicateId,
    OutOfBounds,
    TooFewKeypoints,
    UnsupportedVersion,
    ValidationError,
)
from .features import (
    FeatureMap,
    GridIndex,
    pixel_to_grid,
    read_feature_bytes,
    write_feature_bytes,
)

OKPP_MAGIC = b"OKPP"
OKPP_VERSION = 1
DEFAULT_N_SEG = 8
SAMPLES_PER_SEGMENT = 4


@dataclass(frozen=True)
class Annotation:
    """Annotated support keypoints: (id, u, v) in model-input pixels."""

    keypoints: tuple[tuple[int, float, float], ...]
    excluded_edges: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self) -> None:
        ids = [k for k, _, _ in self.keypoints]
        if len(set(ids)) != len(ids):
            raise DuplicateId("duplicate keypoint id in annotation")
        n = len(ids)
        if n < 2:
            raise TooFewKeypoints("at least 2 keypoints are required")
        if sorted(ids) != list(range(1, n + 1)):
            raise ValidationError(f"keypoint ids must be 1..{n}, got {sorted(ids)}")
        for k, l in self.excluded_edges:
            if k == l or k not in ids or l not in ids:
                raise ValidationError(f"bad excluded edge ({k}, {l})")
            if (min(k, l), max(k, l)) != (k, l):
                raise ValidationError("excluded edges must be stored as (low, high)")

    @property
    def n_kp(self) -> int:
        return len(self.keypoints)

    def edge_pairs(self) -> list[tuple[int, int]]:
        """All non-excluded unordered id pairs, (low, high), sorted."""
        n = self.n_kp
        return [
            (k, l)
            for k in range(1, n + 1)
            for l in range(k + 1, n + 1)
            if (k, l) not in self.excluded_edges
        ]

    def to_dict(self) -> dict:
        return {
            "keypoints": [
                {"id": k, "u": u, "v": v} for k, u, v in self.keypoints
            ],
            "excluded_edges": [list(p) for p in sorted(self.excluded_edges)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Annotation":
        kps = tuple(
            (int(kp["id"]), float(kp["u"]), float(kp["v"]))
            for kp in d["keypoints"]
        )
        excl = frozenset(
            (min(a, b), max(a, b)) for a, b in d.get("excluded_edges", [])
        )
        return cls(kps, excl)


@dataclass(frozen=True)
class KeypointPrototype:
    id: int
    cell: GridIndex
    vector: np.ndarray  # (D_B,)
    adjacent_cells: tuple[GridIndex, ...]  # N/S/E/W, clamped, deduplicated


def edge_descriptor(
    fmap: FeatureMap, a: GridIndex, b: GridIndex, n_seg: int
) -> np.ndarray:
    """Averaged descriptors of the n_seg sub-segments of the segment a->b.

    Each sub-segment is sampled at SAMPLES_PER_SEGMENT midpoint-offset
    parameters; every sample reads the nearest grid cell.  Returns an
    (n_seg, C) array.  A zero-length segment repeats the cell descriptor.
    """
    h, w = fmap.h_f, fmap.w_f
    for idx in (a, b):
        if not (0 <= idx.row < h and 0 <= idx.col < w):
            raise OutOfBounds(f"cell {idx} outside {h}x{w} grid")
    t_samples = SAMPLES_PER_SEGMENT
    q = (np.arange(n_seg * t_samples) + 0.5) / (n_seg * t_samples)
    rows = np.clip(np.rint(a.row + q * (b.row - a.row)).astype(int), 0, h - 1)
    cols = np.clip(np.rint(a.col + q * (b.col - a.col)).astype(int), 0, w - 1)
    samples = fmap.data[rows, cols, :].reshape(n_seg, t_samples, fmap.c)
    return samples.mean(axis=1)


def _adjacent_cells(cell: GridIndex, h: int, w: int) -> tuple[GridIndex, ...]:
    seen: list[GridIndex] = []
    for dr, dc in ((-1, 0), (1, 0), (0, 1), (0, -1)):
        nb = GridIndex(
            min(max(cell.row + dr, 0), h - 1), min(max(cell.col + dc, 0), w - 1)
        )
        if nb not in seen:
            seen.append(nb)
    return tuple(seen)


@dataclass
class PrototypeStore:
    """One-shot learned artifact: raw support map + annotation + derived data.

    Derived fields are a pure function of the persisted ones and are
    recomputed on load.
    """

    support_map: FeatureMap
    annotation: Annotation
    enhance_cfg: EnhanceConfig
    n_seg: int = DEFAULT_N_SEG
    enhanced_support: FeatureMap = field(init=False)
    keypoints: dict[int, KeypointPrototype] = field(init=False)
    edges: dict[tuple[int, int], np.ndarray] = field(init=False)

    def __post_init__(self) -> None:
        if self.n_seg < 1:
            raise ValidationError("n_seg must be >= 1")
        geom = self.support_map.geom
        cells = {}
        for k, u, v in self.annotation.keypoints:
            cells[k] = pixel_to_grid(u, v, geom)
        zsb = enhance(self.support_map, self.enhance_cfg)
        h, w = zsb.h_f, zsb.w_f
        self.enhanced_support = zsb
        self.keypoints = {
            k: KeypointPrototype(
                id=k,
                cell=cell,
                vector=zsb.data[cell.row, cell.col].copy(),
                adjacent_cells=_adjacent_cells(cell, h, w),
            )
            for k, cell in cells.items()
        }
        self.edges = {
            (k, l): edge_descriptor(zsb, cells[k], cells[l], self.n_seg)
            for k, l in self.annotation.edge_pairs()
        }

    @property
    def n_kp(self) -> int:
        return self.annotation.n_kp

    @property
    def d(self) -> int:
        return self.support_map.c

    @property
    def d_b(self) -> int:
        return self.support_map.c * BIN_FACTOR

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PrototypeStore):
            return NotImplemented
        return (
            self.support_map == other.support_map
            and self.annotation == other.annotation
            and self.enhance_cfg == other.enhance_cfg
            and self.n_seg == other.n_seg
        )


def learn_prototypes(
    support: FeatureMap,
    ann: Annotation,
    cfg: EnhanceConfig,
    n_seg: int = DEFAULT_N_SEG,
) -> PrototypeStore:
    return PrototypeStore(support, ann, cfg, n_seg)


def store_to_bytes(store: PrototypeStore) -> bytes:
    ann_blob = json.dumps(store.annotation.to_dict(), sort_keys=True).encode()
    cfg = dict(store.enhance_cfg.to_dict(), n_seg=store.n_seg)
    cfg_blob = json.dumps(cfg, sort_keys=True).encode()
    parts = [
        OKPP_MAGIC,
        struct.pack("<B", OKPP_VERSION),
        struct.pack("<I", len(ann_blob)),
        ann_blob,
        struct.pack("<I", len(cfg_blob)),
        cfg_blob,
        write_feature_bytes(store.support_map),
    ]
    return b"".join(parts)


def store_from_bytes(blob: bytes) -> PrototypeStore:
    if blob[:4] != OKPP_MAGIC:
        raise BadMagic(f"bad magic {blob[:4]!r}")
    version = blob[4]
    if version != OKPP_VERSION:
        raise UnsupportedVersion(f"OKPP version {version}")
    off = 5
    (ann_len,) = struct.unpack_from("<I", blob, off)
    off += 4
    ann = Annotation.from_dict(json.loads(blob[off : off + ann_len]))
    off += ann_len
    (cfg_len,) = struct.unpack_from("<I", blob, off)
    off += 4
    cfg_dict = json.loads(blob[off : off + cfg_len])
    off += cfg_len
    n_seg = int(cfg_dict.pop("n_seg", DEFAULT_N_SEG))
    cfg = EnhanceConfig.from_dict(cfg_dict)
    support = read_feature_bytes(blob[off:])
    return PrototypeStore(support, ann, cfg, n_seg)


def save_store(store: PrototypeStore, path) -> None:
    with open(path, "wb") as f:
        f.write(store_to_bytes(store))


def load_store(path) -> PrototypeStore:
    with open(path, "rb") as f:
        return store_from_bytes(f.read())
