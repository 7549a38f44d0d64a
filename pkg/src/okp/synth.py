"""Deterministic synthetic fixture generator.

Builds a support feature map containing one synthetic object region with
annotated keypoints, and a query map containing M translated copies of that
region over a fresh random background.  Because the copies are exact (up to
optional additive noise), the planted keypoint cells are recoverable by the
full pipeline, which makes the fixtures usable as end-to-end oracles.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .evalkit import GroundTruth, GtInstance
from .features import (
    FeatureMap,
    GridGeometry,
    GridIndex,
    grid_to_pixel,
    scale_to_raw,
    write_feature_file,
)
from .prototypes import Annotation

# Margin (cells) so every copied cell keeps its full enhancement context
# (spaced binning reach 3 + pooling reach 1) inside the copied region.
CONTEXT_MARGIN = 5
BORDER_MARGIN = 4
REGION_GAP = 6
OBJECT_AMPLITUDE = 3.0
MIN_KEYPOINT_SEPARATION = 3


@dataclass(frozen=True)
class SynthSpec:
    instances: int = 2
    keypoints: int = 5
    channels: int = 32
    noise: float = 0.0
    seed: int = 7
    grid: int = 64
    patch: int = 8
    stride: int = 4

    def __post_init__(self) -> None:
        if self.instances < 1:
            raise ValidationError("need at least one instance")
        if self.keypoints < 2:
            raise ValidationError("need at least two keypoints")
        if self.channels < 1 or self.grid < 16:
            raise ValidationError("bad channels/grid")
        if self.noise < 0:
            raise ValidationError("noise must be >= 0")

    @property
    def geom(self) -> GridGeometry:
        src = (self.grid - 1) * self.stride + self.patch
        return GridGeometry(
            src_w=src, src_h=src, patch=self.patch, stride=self.stride,
            raw_w=src, raw_h=src, pad_left=0, pad_top=0,
        )

    @property
    def region_side(self) -> int:
        inner = max(5, MIN_KEYPOINT_SEPARATION * math.ceil(math.sqrt(self.keypoints)) + 1)
        return inner + 2 * CONTEXT_MARGIN


def _sample_keypoint_cells(
    rng: np.random.Generator, spec: SynthSpec
) -> list[tuple[int, int]]:
    """Distinct in-region cells with pairwise Chebyshev separation."""
    side = spec.region_side
    lo, hi = CONTEXT_MARGIN, side - CONTEXT_MARGIN  # exclusive hi
    for _ in range(10_000):
        cells: list[tuple[int, int]] = []
        while len(cells) < spec.keypoints:
            r = int(rng.integers(lo, hi))
            c = int(rng.integers(lo, hi))
            if all(
                max(abs(r - pr), abs(c - pc)) >= MIN_KEYPOINT_SEPARATION
                for pr, pc in cells
            ):
                cells.append((r, c))
            else:
                break
        if len(cells) == spec.keypoints:
            return cells
    raise ValidationError("could not place keypoints with required separation")


def _placement_slots(spec: SynthSpec) -> list[tuple[int, int]]:
    """Non-overlapping lattice of region origins inside the query grid."""
    side = spec.region_side
    pitch = side + REGION_GAP
    usable = spec.grid - 2 * BORDER_MARGIN
    per_axis = (usable + REGION_GAP) // pitch
    return [
        (BORDER_MARGIN + i * pitch, BORDER_MARGIN + j * pitch)
        for i in range(per_axis)
        for j in range(per_axis)
    ]


def generate_fixture(out_dir, spec: SynthSpec) -> dict[str, str]:
    """Write support.okpf, annotation.json, query.okpf, and gt.json.

    Deterministic: the same spec (including seed) produces bit-identical
    files.  Raises ValidationError when the requested instances cannot be
    placed without overlap.
    """
    slots = _placement_slots(spec)
    if spec.instances > len(slots):
        raise ValidationError(
            f"{spec.instances} instances cannot fit a {spec.grid}x{spec.grid} "
            f"grid without overlap (capacity {len(slots)})"
        )
    rng = np.random.default_rng(spec.seed)
    g, d, side = spec.grid, spec.channels, spec.region_side
    geom = spec.geom

    obj = rng.normal(0.0, OBJECT_AMPLITUDE, (side, side, d)).astype(np.float32)
    kp_cells = _sample_keypoint_cells(rng, spec)

    support_data = rng.normal(0.0, 1.0, (g, g, d)).astype(np.float32)
    s_origin = ((g - side) // 2, (g - side) // 2)
    support_data[
        s_origin[0] : s_origin[0] + side, s_origin[1] : s_origin[1] + side
    ] = obj
    support = FeatureMap(support_data, geom)

    keypoints = []
    for k, (r, c) in enumerate(kp_cells, start=1):
        u, v = grid_to_pixel(GridIndex(s_origin[0] + r, s_origin[1] + c), geom)
        keypoints.append((k, u, v))
    annotation = Annotation(tuple(keypoints))

    query_data = rng.normal(0.0, 1.0, (g, g, d)).astype(np.float32)
    chosen = rng.choice(len(slots), size=spec.instances, replace=False)
    origins = [slots[int(i)] for i in chosen]
    for r0, c0 in origins:
        query_data[r0 : r0 + side, c0 : c0 + side] = obj
    if spec.noise > 0:
        rms = float(np.sqrt(np.mean(query_data.astype(np.float64) ** 2)))
        query_data = query_data + rng.normal(
            0.0, spec.noise * rms, query_data.shape
        ).astype(np.float32)
    query = FeatureMap(query_data, geom)

    gt_instances = []
    for n, (r0, c0) in enumerate(origins, start=1):
        kps = {}
        for k, (r, c) in enumerate(kp_cells, start=1):
            u, v = grid_to_pixel(GridIndex(r0 + r, c0 + c), geom)
            kps[k] = scale_to_raw(u, v, geom)
        gt_instances.append(GtInstance(id=n, keypoints=kps))
    gt = GroundTruth(
        image="query", width=geom.raw_w, height=geom.raw_h,
        instances=tuple(gt_instances),
    )

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "support": os.path.join(out_dir, "support.okpf"),
        "annotation": os.path.join(out_dir, "annotation.json"),
        "query": os.path.join(out_dir, "query.okpf"),
        "gt": os.path.join(out_dir, "gt.json"),
    }
    write_feature_file(support, paths["support"])
    with open(paths["annotation"], "w") as f:
        json.dump(annotation.to_dict(), f, indent=1, sort_keys=True)
    write_feature_file(query, paths["query"])
    with open(paths["gt"], "w") as f:
        json.dump(gt.to_dict(), f, indent=1, sort_keys=True)
    return paths
