"""One-shot instance-aware object keypoint extraction from dense feature maps."""

from .detections import DetectionSet
from .enhance import EnhanceConfig, enhance, objectness_activation
from .errors import OkpError
from .features import (
    FeatureMap,
    GridGeometry,
    GridIndex,
    grid_to_pixel,
    pixel_to_grid,
    read_feature_file,
    scale_to_raw,
    write_feature_file,
)
from .grouping import GroupConfig, group_candidates, min_keypoints_rule
from .matching import MatchConfig, cosine_similarity, extract_candidates, similarity_matrix
from .prototypes import Annotation, PrototypeStore, learn_prototypes, load_store, save_store

__all__ = [
    "Annotation",
    "DetectionSet",
    "EnhanceConfig",
    "FeatureMap",
    "GridGeometry",
    "GridIndex",
    "GroupConfig",
    "MatchConfig",
    "OkpError",
    "PrototypeStore",
    "cosine_similarity",
    "enhance",
    "extract_candidates",
    "grid_to_pixel",
    "group_candidates",
    "learn_prototypes",
    "load_store",
    "min_keypoints_rule",
    "objectness_activation",
    "pixel_to_grid",
    "read_feature_file",
    "save_store",
    "scale_to_raw",
    "similarity_matrix",
    "write_feature_file",
]
