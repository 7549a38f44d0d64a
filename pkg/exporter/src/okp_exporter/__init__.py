"""Dense ViT patch-token feature export to OKPF files."""

from .export import (
    MODEL_TABLE,
    ExportConfig,
    export_features,
    extract_tokens,
    load_model,
    preprocess_image,
)
from .okpf import ExportGeometry, feature_bytes, write_feature_file

__all__ = [
    "MODEL_TABLE",
    "ExportConfig",
    "ExportGeometry",
    "export_features",
    "extract_tokens",
    "feature_bytes",
    "load_model",
    "preprocess_image",
    "write_feature_file",
]
