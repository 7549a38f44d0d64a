"""Training-free feature enhancement: objectness attention and neighborhood binning.

The enhancement pipeline turns a D-channel grid into a 17*D-channel grid:
each cell keeps its own descriptor, the descriptors of its 8 adjacent cells,
and the descriptors of 8 spaced neighbors read from a box-pooled copy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .errors import ShapeMismatch, ValidationError
from .features import FeatureMap

# 8-neighborhood offsets in row-major order, center excluded.
NEIGHBOR_OFFSETS = (
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1), (0, 1),
    (1, -1), (1, 0), (1, 1),
)
BIN_FACTOR = 1 + 2 * len(NEIGHBOR_OFFSETS)  # 17


@dataclass(frozen=True)
class EnhanceConfig:
    alpha: float = 5.0
    use_objectness_attention: bool = True
    bin_spacing: int = 3
    pool_kernel: int = 3

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise ValidationError("alpha must be positive")
        if self.bin_spacing < 1:
            raise ValidationError("bin_spacing must be >= 1")
        if self.pool_kernel < 1 or self.pool_kernel % 2 == 0:
            raise ValidationError("pool_kernel must be odd and >= 1")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "use_objectness_attention": self.use_objectness_attention,
            "bin_spacing": self.bin_spacing,
            "pool_kernel": self.pool_kernel,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnhanceConfig":
        return cls(**d)


@dataclass(frozen=True)
class ActivationMap:
    """Per-cell mean absolute activation, min-max normalized to [-1, 1]."""

    values: np.ndarray  # (h_f, w_f) float32

    @property
    def h_f(self) -> int:
        return self.values.shape[0]

    @property
    def w_f(self) -> int:
        return self.values.shape[1]


def objectness_activation(fmap: FeatureMap) -> ActivationMap:
    """Mean |feature| per cell, rescaled so the map spans [-1, 1].

    A constant raw map (max == min) normalizes to all zeros.
    """
    raw = np.abs(fmap.data).mean(axis=2)
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        values = np.zeros_like(raw, dtype=np.float32)
    else:
        values = (2.0 * (raw - lo) / (hi - lo) - 1.0).astype(np.float32)
    return ActivationMap(values)


def attention_scales(act: ActivationMap, alpha: float) -> np.ndarray:
    """Logistic gate sigma(alpha * O) per cell, strictly inside (0, 1)."""
    return (1.0 / (1.0 + np.exp(-alpha * act.values.astype(np.float64)))).astype(
        np.float32
    )


def apply_objectness_attention(
    fmap: FeatureMap, act: ActivationMap, cfg: EnhanceConfig
) -> FeatureMap:
    if act.values.shape != fmap.data.shape[:2]:
        raise ShapeMismatch("activation map does not match feature grid")
    scales = attention_scales(act, cfg.alpha)
    return FeatureMap(fmap.data * scales[:, :, None], fmap.geom)


def average_pool(fmap: FeatureMap, kernel: int = 3) -> FeatureMap:
    """Stride-1 box filter with clamp-to-edge borders; shape preserved."""
    pooled = uniform_filter(fmap.data, size=(kernel, kernel, 1), mode="nearest")
    return FeatureMap(pooled, fmap.geom)


def neighborhood_binning(
    attended: FeatureMap, pooled: FeatureMap, cfg: EnhanceConfig
) -> FeatureMap:
    """Concatenate center + 8 adjacent (attended) + 8 spaced (pooled) blocks.

    Out-of-grid neighbors clamp to the nearest edge cell.  Output channel
    count is 17x the input's.
    """
    if attended.data.shape != pooled.data.shape:
        raise ShapeMismatch("attended and pooled maps differ in shape")
    h, w = attended.h_f, attended.w_f
    rows = np.arange(h)
    cols = np.arange(w)
    blocks = [attended.data]
    for source, spacing in ((attended.data, 1), (pooled.data, cfg.bin_spacing)):
        for dr, dc in NEIGHBOR_OFFSETS:
            r = np.clip(rows + dr * spacing, 0, h - 1)
            c = np.clip(cols + dc * spacing, 0, w - 1)
            blocks.append(source[r[:, None], c[None, :], :])
    return FeatureMap(np.concatenate(blocks, axis=2), attended.geom)


def enhance(fmap: FeatureMap, cfg: EnhanceConfig) -> FeatureMap:
    """Full enhancement: (optional attention) -> pooling -> binning."""
    if cfg.use_objectness_attention:
        attended = apply_objectness_attention(fmap, objectness_activation(fmap), cfg)
    else:
        attended = fmap
    pooled = average_pool(attended, cfg.pool_kernel)
    return neighborhood_binning(attended, pooled, cfg)
