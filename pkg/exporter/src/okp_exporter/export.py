"""Dense patch-token export from pretrained vision transformers.

Runs a ViT backbone with its patch-embedding stride overridden (denser
token grid than the native patch tiling), captures the final-layer patch
tokens, and writes them as an OKPF feature file with full geometry
metadata.  Inference is deterministic: exporting the same image twice
with the same config produces byte-identical output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image
from transformers import ViTConfig, ViTModel

from .okpf import ExportGeometry, write_feature_file

# model id -> (hub checkpoint, native patch size)
MODEL_TABLE = {
    "dino-vitb8": ("facebook/dino-vitb8", 8),
    "dino-vitb16": ("facebook/dino-vitb16", 16),
}

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class ExportConfig:
    """How to run the backbone.

    `stride` defaults to half the model's native patch size.  With
    `random_weights` the architecture is instantiated from a fixed seed
    instead of downloading pretrained weights; geometry and determinism
    are unaffected, feature quality obviously is.  `layers` truncates
    the encoder depth (random-weights testing only; None keeps all).
    """

    model: str = "dino-vitb8"
    input_size: int | None = None
    stride: int | None = None
    device: str = "cpu"
    random_weights: bool = False
    seed: int = 0
    layers: int | None = None

    def __post_init__(self) -> None:
        if self.model not in MODEL_TABLE:
            known = ", ".join(sorted(MODEL_TABLE))
            raise ValueError(f"unknown model {self.model!r} (known: {known})")
        if self.stride is None:
            object.__setattr__(self, "stride", self.patch // 2)
        if self.input_size is None:
            # native side scales with patch size: 260 for p=8, 520 for p=16
            object.__setattr__(self, "input_size", self.patch * 32 + self.patch // 2)
        if self.input_size < self.patch or self.stride < 1:
            raise ValueError("input_size must cover one patch; stride >= 1")
        if (self.input_size - self.patch) % self.stride != 0:
            raise ValueError(
                f"input_size {self.input_size} does not align: "
                f"(input_size - {self.patch}) must be divisible by stride "
                f"{self.stride}"
            )

    @property
    def patch(self) -> int:
        return MODEL_TABLE[self.model][1]

    @property
    def grid(self) -> int:
        return (self.input_size - self.patch) // self.stride + 1


def _resample_position_embeddings(model: ViTModel, grid: int) -> None:
    """Bicubically resample patch position embeddings to a grid x grid map."""
    pe = model.embeddings.position_embeddings.data
    cls_pe, patch_pe = pe[:, :1], pe[:, 1:]
    g0 = int(round(patch_pe.shape[1] ** 0.5))
    dim = patch_pe.shape[-1]
    patch_pe = patch_pe.reshape(1, g0, g0, dim).permute(0, 3, 1, 2)
    patch_pe = torch.nn.functional.interpolate(
        patch_pe, size=(grid, grid), mode="bicubic", align_corners=False
    )
    patch_pe = patch_pe.permute(0, 2, 3, 1).reshape(1, grid * grid, dim)
    model.embeddings.position_embeddings = torch.nn.Parameter(
        torch.cat([cls_pe, patch_pe], dim=1)
    )


def load_model(cfg: ExportConfig) -> ViTModel:
    """Instantiate the backbone with the stride override applied."""
    checkpoint, patch = MODEL_TABLE[cfg.model]
    if cfg.random_weights:
        torch.manual_seed(cfg.seed)
        vit_cfg = ViTConfig(
            image_size=224, patch_size=patch,
            num_hidden_layers=cfg.layers if cfg.layers else 12,
        )
        model = ViTModel(vit_cfg, add_pooling_layer=False)
    else:
        model = ViTModel.from_pretrained(checkpoint, add_pooling_layer=False)
        if cfg.layers:
            model.encoder.layer = model.encoder.layer[: cfg.layers]
    model = model.to(cfg.device).eval()
    model.embeddings.patch_embeddings.projection.stride = (cfg.stride, cfg.stride)
    _resample_position_embeddings(model, cfg.grid)
    return model


def preprocess_image(path, cfg: ExportConfig):
    """Pad to square, resize, normalize.

    Returns the pixel tensor plus the header geometry: pads are recorded
    in raw-image pixels (the square side is max(raw_w, raw_h)), so a
    model-input coordinate maps back to the raw frame as
    ``raw = coord * max(raw_w, raw_h) / input_size - pad``.
    """
    img = Image.open(path).convert("RGB")
    raw_w, raw_h = img.size
    side = max(raw_w, raw_h)
    pad_left = (side - raw_w) // 2
    pad_top = (side - raw_h) // 2
    square = Image.new("RGB", (side, side))
    square.paste(img, (pad_left, pad_top))
    square = square.resize((cfg.input_size, cfg.input_size), Image.BILINEAR)

    pixels = np.asarray(square, dtype=np.float32) / 255.0
    pixels = (pixels - IMAGENET_MEAN) / IMAGENET_STD
    tensor = torch.from_numpy(
        np.ascontiguousarray(pixels.transpose(2, 0, 1), dtype=np.float32)
    ).unsqueeze(0)

    geom = ExportGeometry(
        src_w=cfg.input_size, src_h=cfg.input_size,
        patch=cfg.patch, stride=cfg.stride,
        raw_w=raw_w, raw_h=raw_h, pad_left=pad_left, pad_top=pad_top,
    )
    return tensor, geom


def extract_tokens(model: ViTModel, pixels: torch.Tensor, cfg: ExportConfig) -> np.ndarray:
    """Final-layer patch tokens as a (grid, grid, D) float32 array (no CLS)."""
    with torch.inference_mode():
        hidden = model(
            pixels.to(cfg.device), interpolate_pos_encoding=True
        ).last_hidden_state
    g = cfg.grid
    if hidden.shape[1] != g * g + 1:
        raise RuntimeError(
            f"token count {hidden.shape[1]} does not match grid {g}x{g} + CLS"
        )
    tokens = hidden[0, 1:, :].cpu().numpy().astype(np.float32)
    return tokens.reshape(g, g, -1)


def export_features(image_path, cfg: ExportConfig, out_path,
                    model: ViTModel | None = None) -> ExportGeometry:
    """Run the full export and write OKPF plus a .meta.json sidecar."""
    pixels, geom = preprocess_image(image_path, cfg)
    if model is None:
        model = load_model(cfg)
    tokens = extract_tokens(model, pixels, cfg)
    write_feature_file(tokens, geom, out_path)
    meta = {
        "model": cfg.model,
        "input_size": cfg.input_size,
        "stride": cfg.stride,
        "resize": "bilinear",
        "pos_embed_resample": "bicubic",
        "random_weights": cfg.random_weights,
        "seed": cfg.seed if cfg.random_weights else None,
        "layers": cfg.layers,
    }
    with open(f"{out_path}.meta.json", "w") as f:
        json.dump(meta, f, indent=1, sort_keys=True)
    return geom
