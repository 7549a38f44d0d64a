import json
import os

import numpy as np
import pytest

from okp.cli import main
from okp.detections import load_detections, save_detections
from okp.features import (
    FeatureMap,
    GridGeometry,
    pixel_to_grid,
    read_feature_file,
    write_feature_file,
)
from okp.prototypes import load_store

from conftest import make_geom, make_map


def run(*argv):
    return main([str(a) for a in argv])


def synth_dir(tmp_path, name="fx", **kw):
    out = tmp_path / name
    args = ["synth", "--out-dir", out]
    for key, val in kw.items():
        args += [f"--{key.replace('_', '-')}", val]
    assert run(*args) == 0
    return out


def learn(tmp_path, fx, **kw):
    proto = tmp_path / "proto.okpp"
    args = [
        "learn", "--features", fx / "support.okpf",
        "--annotations", fx / "annotation.json", "--out", proto,
    ]
    for key, val in kw.items():
        args += [f"--{key}", val]
    assert run(*args) == 0
    return proto


def test_synth_deterministic(tmp_path):
    a = synth_dir(tmp_path, "a", seed=7)
    b = synth_dir(tmp_path, "b", seed=7)
    for name in ("support.okpf", "annotation.json", "query.okpf", "gt.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_synth_overflow_exits_2(tmp_path, capsys):
    assert run("synth", "--out-dir", tmp_path / "x", "--instances", 50) == 2
    assert "overlap" in capsys.readouterr().err


def test_learn_prints_summary(tmp_path, capsys):
    fx = synth_dir(tmp_path, channels=8)
    proto = learn(tmp_path, fx)
    out = capsys.readouterr().out
    assert "keypoints=5" in out and "edges=10" in out
    assert "channels=8" in out and "enhanced_channels=136" in out
    store = load_store(proto)
    assert store.n_kp == 5


def test_learn_duplicate_id_exits_2(tmp_path, capsys):
    fx = synth_dir(tmp_path, channels=8)
    ann = json.loads((fx / "annotation.json").read_text())
    ann["keypoints"][1]["id"] = 1
    (fx / "annotation.json").write_text(json.dumps(ann))
    code = run(
        "learn", "--features", fx / "support.okpf",
        "--annotations", fx / "annotation.json", "--out", tmp_path / "p.okpp",
    )
    assert code == 2
    assert "duplicate keypoint id" in capsys.readouterr().err


def test_learn_single_keypoint_exits_2(tmp_path):
    fx = synth_dir(tmp_path, channels=8)
    ann = json.loads((fx / "annotation.json").read_text())
    ann["keypoints"] = ann["keypoints"][:1]
    ann["excluded_edges"] = []
    (fx / "annotation.json").write_text(json.dumps(ann))
    code = run(
        "learn", "--features", fx / "support.okpf",
        "--annotations", fx / "annotation.json", "--out", tmp_path / "p.okpp",
    )
    assert code == 2


def test_learn_missing_file_exits_1(tmp_path):
    code = run(
        "learn", "--features", tmp_path / "none.okpf",
        "--annotations", tmp_path / "none.json", "--out", tmp_path / "p.okpp",
    )
    assert code == 1


def test_extract_self_query(tmp_path):
    fx = synth_dir(tmp_path, channels=16)
    proto = learn(tmp_path, fx)
    out = tmp_path / "det.json"
    assert run(
        "extract", "--proto", proto, "--features", fx / "support.okpf",
        "--out", out,
    ) == 0
    det = load_detections(out)
    assert len(det.instances) == 1
    ann = json.loads((fx / "annotation.json").read_text())
    annotated = {kp["id"]: (kp["u"], kp["v"]) for kp in ann["keypoints"]}
    support = read_feature_file(fx / "support.okpf")
    for kp in det.instances[0].keypoints:
        assert kp.score >= 0.999
        assert pixel_to_grid(kp.u, kp.v, support.geom) == pixel_to_grid(
            *annotated[kp.id], support.geom
        )


def test_extract_two_instances(tmp_path):
    fx = synth_dir(tmp_path, seed=7, instances=2, channels=16)
    proto = learn(tmp_path, fx)
    out = tmp_path / "det.json"
    assert run(
        "extract", "--proto", proto, "--features", fx / "query.okpf",
        "--out", out,
    ) == 0
    assert len(load_detections(out).instances) == 2


def test_extract_channel_mismatch_exits_2(tmp_path, rng):
    fx = synth_dir(tmp_path, channels=16)
    proto = learn(tmp_path, fx)
    other = tmp_path / "other.okpf"
    write_feature_file(make_map(rng, 8, 8, 4), other)
    assert run(
        "extract", "--proto", proto, "--features", other,
        "--out", tmp_path / "det.json",
    ) == 2


def test_extract_zero_instances_is_success(tmp_path, rng):
    fx = synth_dir(tmp_path, channels=16)
    proto = learn(tmp_path, fx)
    noise = tmp_path / "noise.okpf"
    write_feature_file(make_map(rng, 64, 64, 16, raw=True), noise)
    out = tmp_path / "det.json"
    assert run("extract", "--proto", proto, "--features", noise, "--out", out) == 0
    det = load_detections(out)
    assert det.instances == ()


def test_extract_default_min_keypoints_rejects_singletons(tmp_path):
    # N_KP = 2 store: a single-keypoint component must never survive
    fx = synth_dir(tmp_path, keypoints=2, channels=16)
    proto = learn(tmp_path, fx)
    out = tmp_path / "det.json"
    assert run(
        "extract", "--proto", proto, "--features", fx / "query.okpf",
        "--out", out,
    ) == 0
    for ins in load_detections(out).instances:
        assert len(ins.keypoints) >= 2


def test_eval_perfect_and_empty(tmp_path):
    fx = synth_dir(tmp_path, channels=16)
    proto = learn(tmp_path, fx)
    det_path = tmp_path / "query.json"
    run("extract", "--proto", proto, "--features", fx / "query.okpf",
        "--out", det_path)
    report_path = tmp_path / "report.json"
    assert run(
        "eval", "--pred", det_path, "--gt", fx / "gt.json",
        "--report", report_path, "--format", "json",
    ) == 0
    report = json.loads(report_path.read_text())
    for m in ("r_kp", "p_kp", "r_ins", "p_ins"):
        assert report["mean"][m] == 1.0

    # empty predictions: recalls drop to 0, precisions stay 1 by convention
    save_detections(load_detections(det_path).__class__("query"), det_path)
    assert run("eval", "--pred", det_path, "--gt", fx / "gt.json",
               "--report", report_path) == 0
    report = json.loads(report_path.read_text())
    assert report["mean"]["r_kp"] == 0.0
    assert report["mean"]["r_ins"] == 0.0


def test_eval_micro_dataset_hand_computed(tmp_path):
    """3-image micro dataset, metrics derived by hand.

    Image 1: 2/2 TP kps, instance claimed          -> 1, 1, 1, 1
    Image 2: 1 TP of 2 preds, 2 GT kps, no TP ins  -> 0.5, 0.5, 0, 1 (no pred ins TP but 1 predicted -> p_ins 0)
    Image 3: no predictions                        -> 0, 1, 0, 1
    """
    gt_dir = tmp_path / "gt" / "seq"
    pred_dir = tmp_path / "pred"
    os.makedirs(gt_dir)
    os.makedirs(pred_dir)
    for i in (1, 2, 3):
        gt = {
            "image": f"img{i}", "width": 100, "height": 100,
            "instances": [
                {"id": 1, "keypoints": [
                    {"id": 1, "u": 10.0, "v": 10.0},
                    {"id": 2, "u": 50.0, "v": 50.0},
                ]}
            ],
        }
        (gt_dir / f"img{i}.json").write_text(json.dumps(gt))
    preds = {
        "img1": [{"id": 1, "u": 10.0, "v": 10.0, "score": 1.0},
                 {"id": 2, "u": 50.0, "v": 50.0, "score": 1.0}],
        "img2": [{"id": 1, "u": 10.0, "v": 10.0, "score": 1.0},
                 {"id": 2, "u": 90.0, "v": 90.0, "score": 1.0}],
    }
    for image, kps in preds.items():
        det = {"image": image, "instances": [{"n": 1, "cohesion": 1.0, "keypoints": kps}]}
        (pred_dir / f"{image}.json").write_text(json.dumps(det))

    report_path = tmp_path / "report.json"
    assert run(
        "eval", "--pred", pred_dir, "--gt", tmp_path / "gt",
        "--report", report_path, "--min-keypoints", 2,
    ) == 0
    seq = json.loads(report_path.read_text())["sequences"]["seq"]
    assert seq["r_kp"] == pytest.approx((1.0 + 0.5 + 0.0) / 3)
    assert seq["p_kp"] == pytest.approx((1.0 + 0.5 + 1.0) / 3)
    assert seq["r_ins"] == pytest.approx((1.0 + 0.0 + 0.0) / 3)
    assert seq["p_ins"] == pytest.approx((1.0 + 0.0 + 1.0) / 3)


def test_eval_missing_gt_exits_1(tmp_path):
    assert run("eval", "--pred", tmp_path, "--gt", tmp_path / "nope.json") == 1


def test_eval_schema_violation_exits_2(tmp_path):
    (tmp_path / "gt.json").write_text('{"image": "x"}')
    (tmp_path / "pred.json").write_text('{"image": "x", "instances": []}')
    assert run("eval", "--pred", tmp_path / "pred.json",
               "--gt", tmp_path / "gt.json") == 2


def test_activation_constant_map(tmp_path):
    fmap = FeatureMap(
        np.full((4, 6, 3), 2.0, np.float32), make_geom(4, 6)
    )
    path = tmp_path / "m.okpf"
    write_feature_file(fmap, path)
    out = tmp_path / "act.pgm"
    assert run("activation", "--features", path, "--out", out) == 0
    blob = out.read_bytes()
    assert blob.startswith(b"P5\n6 4\n255\n")
    pixels = blob[len(b"P5\n6 4\n255\n"):]
    assert len(pixels) == 24
    assert set(pixels) == {128}


def test_activation_extreme_cells(tmp_path, rng):
    data = rng.normal(size=(8, 8, 4)).astype(np.float32)
    data[3, 3] *= 50.0  # maximal activation cell
    path = tmp_path / "m.okpf"
    write_feature_file(FeatureMap(data, make_geom(8, 8)), path)
    out = tmp_path / "act.pgm"
    assert run("activation", "--features", path, "--out", out, "--alpha", 5) == 0
    header = b"P5\n8 8\n255\n"
    pixels = np.frombuffer(out.read_bytes()[len(header):], np.uint8).reshape(8, 8)
    assert pixels[3, 3] == 253  # round(255 * sigmoid(5))


def test_detection_json_roundtrip(tmp_path):
    fx = synth_dir(tmp_path, channels=16)
    proto = learn(tmp_path, fx)
    out = tmp_path / "det.json"
    run("extract", "--proto", proto, "--features", fx / "query.okpf", "--out", out)
    det = load_detections(out)
    again = tmp_path / "det2.json"
    save_detections(det, again)
    assert load_detections(again) == det
