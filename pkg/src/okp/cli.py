"""Command-line front door: learn, extract, eval, activation, synth."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .detections import (
    DetectedInstance,
    DetectedKeypoint,
    DetectionSet,
    load_detections,
    save_detections,
)
from .enhance import (
    EnhanceConfig,
    attention_scales,
    enhance,
    objectness_activation,
)
from .errors import ChannelMismatch, OkpError
from .evalkit import (
    GroundTruth,
    default_min_keypoints,
    format_report,
    load_ground_truth,
    score_image,
)
from .features import (
    GridIndex,
    grid_to_pixel,
    read_feature_file,
    scale_to_raw,
)
from .grouping import GroupConfig, group_candidates
from .matching import MatchConfig, extract_candidates
from .prototypes import (
    Annotation,
    PrototypeStore,
    learn_prototypes,
    load_store,
    save_store,
)
from .synth import SynthSpec, generate_fixture


def run_extraction(
    store: PrototypeStore,
    query,
    match_cfg: MatchConfig,
    group_cfg: GroupConfig,
    image_id: str,
) -> DetectionSet:
    """enhance -> candidates -> grouping -> raw-image coordinates."""
    if query.c != store.d:
        raise ChannelMismatch(
            f"store has {store.d} channels, query has {query.c}"
        )
    query_enhanced = enhance(query, store.enhance_cfg)
    cands = extract_candidates(store, query_enhanced, match_cfg)
    instances = group_candidates(cands, store, query_enhanced, group_cfg)
    det_instances = []
    for n, ins in enumerate(instances, start=1):
        kps = []
        for k, (cell, score) in sorted(ins.keypoints.items()):
            u, v = grid_to_pixel(cell, query.geom)
            if query.geom.has_raw:
                u, v = scale_to_raw(u, v, query.geom)
            kps.append(DetectedKeypoint(k, u, v, score))
        det_instances.append(DetectedInstance(n, ins.cohesion, tuple(kps)))
    return DetectionSet(image_id, tuple(det_instances))


def cmd_learn(args) -> int:
    support = read_feature_file(args.features)
    with open(args.annotations) as f:
        annotation = Annotation.from_dict(json.load(f))
    cfg = EnhanceConfig(
        alpha=args.alpha, use_objectness_attention=not args.no_attention
    )
    store = learn_prototypes(support, annotation, cfg, n_seg=args.nseg)
    save_store(store, args.out)
    print(
        f"keypoints={store.n_kp} edges={len(store.edges)} "
        f"channels={store.d} enhanced_channels={store.d_b}"
    )
    return 0


def cmd_extract(args) -> int:
    store = load_store(args.proto)
    query = read_feature_file(args.features)
    match_cfg = MatchConfig(
        cand_threshold=args.cand_threshold, nms_radius=args.nms_radius
    )
    group_cfg = GroupConfig(
        tau_e=args.tau_e, min_keypoints_override=args.min_keypoints
    )
    image_id = os.path.splitext(os.path.basename(args.features))[0]
    det = run_extraction(store, query, match_cfg, group_cfg, image_id)
    save_detections(det, args.out)
    print(f"instances={len(det.instances)}")
    return 0


def _gt_sequences(gt_path: str) -> dict[str, list[GroundTruth]]:
    if os.path.isfile(gt_path):
        name = os.path.splitext(os.path.basename(gt_path))[0]
        return {name: [load_ground_truth(gt_path)]}
    sequences: dict[str, list[GroundTruth]] = {}
    entries = sorted(os.listdir(gt_path))
    direct = [e for e in entries if e.endswith(".json")]
    if direct:
        name = os.path.basename(os.path.normpath(gt_path))
        sequences[name] = [
            load_ground_truth(os.path.join(gt_path, e)) for e in direct
        ]
    for e in entries:
        sub = os.path.join(gt_path, e)
        if os.path.isdir(sub):
            files = sorted(f for f in os.listdir(sub) if f.endswith(".json"))
            if files:
                sequences[e] = [
                    load_ground_truth(os.path.join(sub, f)) for f in files
                ]
    if not sequences:
        raise FileNotFoundError(f"no ground-truth JSON under {gt_path}")
    return sequences


def _load_predictions(pred_path: str) -> dict[str, DetectionSet]:
    files = []
    if os.path.isfile(pred_path):
        files = [pred_path]
    else:
        for root, _, names in os.walk(pred_path):
            files.extend(
                os.path.join(root, n) for n in sorted(names) if n.endswith(".json")
            )
    preds = {}
    for f in files:
        det = load_detections(f)
        preds[det.image] = det
    return preds


def cmd_eval(args) -> int:
    sequences = _gt_sequences(args.gt)
    preds = _load_predictions(args.pred)
    report: dict = {"sequences": {}, "images": {}}
    seq_means = []
    for name, gts in sorted(sequences.items()):
        n_kp = max(
            (k for gt in gts for ins in gt.instances for k in ins.keypoints),
            default=0,
        )
        min_kp = (
            args.min_keypoints
            if args.min_keypoints is not None
            else default_min_keypoints(max(n_kp, 2))
        )
        image_results = []
        for gt in gts:
            det = preds.get(gt.image, DetectionSet(gt.image))
            res = score_image(det, gt, min_kp, n_kp)
            image_results.append(res)
            report["images"][f"{name}/{gt.image}"] = {
                "r_kp": res.r_kp, "p_kp": res.p_kp,
                "r_ins": res.r_ins, "p_ins": res.p_ins,
            }
        report["sequences"][name] = {
            m: sum(getattr(r, m) for r in image_results) / len(image_results)
            for m in ("r_kp", "p_kp", "r_ins", "p_ins")
        }
        report["sequences"][name]["images"] = len(image_results)
        seq_means.append(report["sequences"][name])
    report["mean"] = {
        m: sum(s[m] for s in seq_means) / len(seq_means)
        for m in ("r_kp", "p_kp", "r_ins", "p_ins")
    }
    if args.report:
        with open(args.report, "w") as f:
            json.dump(report, f, indent=1, sort_keys=True)
    if args.format == "json":
        json.dump(report, sys.stdout, indent=1, sort_keys=True)
        print()
    else:
        print(format_report(report))
    return 0


def cmd_activation(args) -> int:
    fmap = read_feature_file(args.features)
    act = objectness_activation(fmap)
    scales = attention_scales(act, args.alpha)
    pixels = np.rint(255.0 * scales).astype(np.uint8)
    header = f"P5\n{fmap.w_f} {fmap.h_f}\n255\n".encode("ascii")
    with open(args.out, "wb") as f:
        f.write(header + pixels.tobytes())
    return 0


def cmd_synth(args) -> int:
    spec = SynthSpec(
        instances=args.instances,
        keypoints=args.keypoints,
        channels=args.channels,
        noise=args.noise,
        seed=args.seed,
        grid=args.grid,
    )
    paths = generate_fixture(args.out_dir, spec)
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="okp",
        description="One-shot instance-aware object keypoint extraction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn", help="learn prototypes from a support map")
    p.add_argument("--features", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=5.0)
    p.add_argument("--no-attention", action="store_true")
    p.add_argument("--nseg", type=int, default=8)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("extract", help="extract keypoints from a query map")
    p.add_argument("--proto", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tau-e", type=float, default=0.3)
    p.add_argument("--cand-threshold", type=float, default=0.0)
    p.add_argument("--nms-radius", type=int, default=2)
    p.add_argument("--min-keypoints", type=int, default=None)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("eval", help="score detections against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--report", default=None)
    p.add_argument("--min-keypoints", type=int, default=None)
    p.add_argument("--format", choices=("json", "table"), default="table")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("activation", help="export the objectness map as PGM")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=5.0)
    p.set_defaults(func=cmd_activation)

    p = sub.add_parser("synth", help="generate a synthetic fixture directory")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--instances", type=int, default=2)
    p.add_argument("--keypoints", type=int, default=5)
    p.add_argument("--channels", type=int, default=32)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--grid", type=int, default=64)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OkpError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
