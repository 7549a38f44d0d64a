"""Precision/recall evaluation of detections against labeled ground truth.

A predicted keypoint is a true positive when it lies within 5% of the image
width of a same-identity ground-truth point, under one-to-one matching.  A
predicted instance is a true positive when it has enough TP keypoints and
successfully claims a so-far-unclaimed ground-truth instance.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass

from .detections import DetectionSet
from .errors import EmptyGroup, FrameMismatch
from .grouping import min_keypoints_rule

TP_DISTANCE_FRACTION = 0.05


@dataclass(frozen=True)
class GtInstance:
    id: int
    keypoints: dict[int, tuple[float, float]]  # identity -> (u, v) raw coords


@dataclass(frozen=True)
class GroundTruth:
    image: str
    width: int
    height: int
    instances: tuple[GtInstance, ...]

    def to_dict(self) -> dict:
        return {
            "image": self.image,
            "width": self.width,
            "height": self.height,
            "instances": [
                {
                    "id": ins.id,
                    "keypoints": [
                        {"id": k, "u": u, "v": v}
                        for k, (u, v) in sorted(ins.keypoints.items())
                    ],
                }
                for ins in self.instances
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        instances = tuple(
            GtInstance(
                id=int(ins["id"]),
                keypoints={
                    int(kp["id"]): (float(kp["u"]), float(kp["v"]))
                    for kp in ins["keypoints"]
                },
            )
            for ins in d["instances"]
        )
        return cls(str(d["image"]), int(d["width"]), int(d["height"]), instances)


def load_ground_truth(path) -> GroundTruth:
    with open(path) as f:
        return GroundTruth.from_dict(json.load(f))


@dataclass(frozen=True)
class EvalResult:
    r_kp: float
    p_kp: float
    r_ins: float
    p_ins: float
    tp_kp: int
    fp_kp: int
    fn_kp: int
    tp_ins: int
    fp_ins: int
    fn_ins: int


def _ratio(tp: int, total: int) -> float:
    return tp / total if total else 1.0


def match_keypoints(pred: DetectionSet, gt: GroundTruth) -> list[int | None]:
    """Greedy one-to-one matching of predictions to GT keypoints.

    Returns, per flattened prediction (instance order, then keypoint order),
    the index of the matched GT instance, or None for a false positive.
    Pairs of equal identity are accepted distance-ascending while both
    endpoints are unmatched and the distance is below 5% of image width.
    """
    preds = [
        (pi, kp.id, kp.u, kp.v)
        for pi, ins in enumerate(pred.instances)
        for kp in ins.keypoints
    ]
    for _, _, u, v in preds:
        if not (-gt.width <= u <= 2 * gt.width and -gt.height <= v <= 2 * gt.height):
            raise FrameMismatch(
                f"prediction ({u}, {v}) far outside the {gt.width}x{gt.height} frame"
            )
    gts = [
        (gi, k, u, v)
        for gi, ins in enumerate(gt.instances)
        for k, (u, v) in sorted(ins.keypoints.items())
    ]
    threshold = TP_DISTANCE_FRACTION * gt.width
    pairs = sorted(
        (
            (math.hypot(pu - gu, pv - gv), a, b)
            for a, (_, pk, pu, pv) in enumerate(preds)
            for b, (_, gk, gu, gv) in enumerate(gts)
            if pk == gk
        ),
    )
    matched_pred: list[int | None] = [None] * len(preds)
    used_gt = [False] * len(gts)
    for dist, a, b in pairs:
        if dist >= threshold or matched_pred[a] is not None or used_gt[b]:
            continue
        matched_pred[a] = gts[b][0]
        used_gt[b] = True
    return matched_pred


def score_image(
    pred: DetectionSet, gt: GroundTruth, min_keypoints: int, n_kp: int
) -> EvalResult:
    matches = match_keypoints(pred, gt)
    n_pred_kp = len(matches)
    n_gt_kp = sum(len(ins.keypoints) for ins in gt.instances)
    tp_kp = sum(m is not None for m in matches)

    # Per predicted instance: TP-keypoint count and plurality GT instance.
    per_instance: list[tuple[int, int | None]] = []
    pos = 0
    for ins in pred.instances:
        k = len(ins.keypoints)
        hits = [m for m in matches[pos : pos + k] if m is not None]
        pos += k
        plurality = None
        if hits:
            counts = Counter(hits)
            top = max(counts.values())
            plurality = min(g for g, c in counts.items() if c == top)
        per_instance.append((len(hits), plurality))

    claimed: set[int] = set()
    tp_ins = 0
    order = sorted(range(len(per_instance)), key=lambda i: (-per_instance[i][0], i))
    for i in order:
        t, plurality = per_instance[i]
        if not (min_keypoints <= t <= n_kp):
            continue
        if plurality is None or plurality in claimed:
            continue
        claimed.add(plurality)
        tp_ins += 1

    n_pred_ins = len(pred.instances)
    n_gt_ins = len(gt.instances)
    return EvalResult(
        r_kp=_ratio(tp_kp, n_gt_kp),
        p_kp=_ratio(tp_kp, n_pred_kp),
        r_ins=_ratio(len(claimed), n_gt_ins),
        p_ins=_ratio(tp_ins, n_pred_ins),
        tp_kp=tp_kp,
        fp_kp=n_pred_kp - tp_kp,
        fn_kp=n_gt_kp - tp_kp,
        tp_ins=tp_ins,
        fp_ins=n_pred_ins - tp_ins,
        fn_ins=n_gt_ins - len(claimed),
    )


METRIC_NAMES = ("r_kp", "p_kp", "r_ins", "p_ins")


def aggregate(groups: dict[str, list[EvalResult]]) -> dict:
    """Per-sequence unweighted means, plus the unweighted mean over sequences."""
    if not groups or any(not imgs for imgs in groups.values()):
        raise EmptyGroup("every sequence needs at least one image result")
    sequences = {}
    for name, imgs in groups.items():
        sequences[name] = {
            m: sum(getattr(r, m) for r in imgs) / len(imgs) for m in METRIC_NAMES
        }
        sequences[name]["images"] = len(imgs)
    mean = {
        m: sum(seq[m] for seq in sequences.values()) / len(sequences)
        for m in METRIC_NAMES
    }
    return {"sequences": sequences, "mean": mean}


def format_report(report: dict) -> str:
    """Aligned-column text table: one row per sequence plus a Mean row."""
    header = f"{'Sequence':<20}{'R_KP':>8}{'P_KP':>8}{'R_INS':>8}{'P_INS':>8}"
    lines = [header]
    for name in sorted(report["sequences"]):
        seq = report["sequences"][name]
        lines.append(
            f"{name:<20}"
            + "".join(f"{seq[m]:>8.3f}" for m in METRIC_NAMES)
        )
    mean = report["mean"]
    lines.append(
        f"{'Mean':<20}" + "".join(f"{mean[m]:>8.3f}" for m in METRIC_NAMES)
    )
    return "\n".join(lines)


def default_min_keypoints(n_kp: int) -> int:
    return min_keypoints_rule(n_kp)
