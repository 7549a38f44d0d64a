"""Final detection results and their JSON wire format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import NonFiniteValue, ValidationError


@dataclass(frozen=True)
class DetectedKeypoint:
    id: int
    u: float
    v: float
    score: float


@dataclass(frozen=True)
class DetectedInstance:
    n: int
    cohesion: float
    keypoints: tuple[DetectedKeypoint, ...]

    def __post_init__(self) -> None:
        ids = [kp.id for kp in self.keypoints]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate keypoint identity within an instance")
        for kp in self.keypoints:
            if not all(map(_finite, (kp.u, kp.v, kp.score))):
                raise NonFiniteValue("non-finite detection coordinate/score")


def _finite(x: float) -> bool:
    return x == x and abs(x) != float("inf")


@dataclass(frozen=True)
class DetectionSet:
    image: str
    instances: tuple[DetectedInstance, ...] = ()

    def to_dict(self) -> dict:
        return {
            "image": self.image,
            "instances": [
                {
                    "n": ins.n,
                    "cohesion": ins.cohesion,
                    "keypoints": [
                        {"id": kp.id, "u": kp.u, "v": kp.v, "score": kp.score}
                        for kp in ins.keypoints
                    ],
                }
                for ins in self.instances
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DetectionSet":
        instances = tuple(
            DetectedInstance(
                n=int(ins["n"]),
                cohesion=float(ins["cohesion"]),
                keypoints=tuple(
                    DetectedKeypoint(
                        int(kp["id"]), float(kp["u"]), float(kp["v"]), float(kp["score"])
                    )
                    for kp in ins["keypoints"]
                ),
            )
            for ins in d["instances"]
        )
        return cls(str(d["image"]), instances)


def save_detections(det: DetectionSet, path) -> None:
    with open(path, "w") as f:
        json.dump(det.to_dict(), f, indent=1)


def load_detections(path) -> DetectionSet:
    with open(path) as f:
        return DetectionSet.from_dict(json.load(f))
