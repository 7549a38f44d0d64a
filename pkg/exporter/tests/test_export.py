"""Exporter tests.

Random-weights mode (seeded, truncated encoder) keeps these runnable
offline and fast; geometry, determinism, and wire-format compatibility
do not depend on pretrained weights.  The written files are parsed back
with the downstream `okp` reader, exercising the OKPF interface across
the package boundary.
"""

import json

import numpy as np
import pytest

from okp.features import read_feature_file, scale_to_raw
from okp_exporter import (
    ExportConfig,
    ExportGeometry,
    export_features,
    feature_bytes,
)
from okp_exporter.cli import main
from PIL import Image

HEADER_SIZE = 49


@pytest.fixture(scope="session")
def photo(tmp_path_factory):
    """A deterministic non-square test image (landscape, 300x200)."""
    rng = np.random.default_rng(42)
    data = rng.integers(0, 256, size=(200, 300, 3), dtype=np.uint8)
    path = tmp_path_factory.mktemp("img") / "photo.png"
    Image.fromarray(data).save(path)
    return path

CONFIGS = {
    "dino-vitb8": ExportConfig(
        model="dino-vitb8", input_size=260, stride=4,
        random_weights=True, layers=2,
    ),
    "dino-vitb16": ExportConfig(
        model="dino-vitb16", input_size=520, stride=8,
        random_weights=True, layers=2,
    ),
}


@pytest.fixture(scope="session")
def exported(photo, tmp_path_factory):
    """One export per config, shared across tests."""
    out_dir = tmp_path_factory.mktemp("okpf")
    results = {}
    for name, cfg in CONFIGS.items():
        path = out_dir / f"{name}.okpf"
        geom = export_features(photo, cfg, path)
        results[name] = (path, geom, cfg)
    return results


@pytest.mark.parametrize("name", sorted(CONFIGS))
def test_geometry_64x64x768(exported, name):
    path, geom, cfg = exported[name]
    fmap = read_feature_file(path)
    assert fmap.data.shape == (64, 64, 768)
    assert fmap.geom.src_w == fmap.geom.src_h == cfg.input_size
    assert fmap.geom.patch == cfg.patch
    assert fmap.geom.stride == cfg.stride
    # header satisfies the grid formula
    assert (cfg.input_size - cfg.patch) // cfg.stride + 1 == 64


@pytest.mark.parametrize("name", sorted(CONFIGS))
def test_cls_token_absent(exported, name):
    # Payload holds exactly h*w*c floats; a retained CLS row would add 768.
    path, _, _ = exported[name]
    assert path.stat().st_size == HEADER_SIZE + 64 * 64 * 768 * 4


def test_repeated_export_byte_identical(photo, tmp_path, exported):
    first, _, cfg = exported["dino-vitb8"]
    again = tmp_path / "again.okpf"
    export_features(photo, cfg, again)
    assert again.read_bytes() == first.read_bytes()


def test_raw_pad_metadata_roundtrip(exported):
    # photo is 300x200 -> square side 300, pad_top (300-200)//2 = 50
    path, geom, cfg = exported["dino-vitb8"]
    assert (geom.raw_w, geom.raw_h) == (300, 200)
    assert (geom.pad_left, geom.pad_top) == (0, 50)
    fmap = read_feature_file(path)
    scale = cfg.input_size / 300.0
    corners = [(0.0, 0.0), (300.0, 0.0), (0.0, 200.0), (300.0, 200.0)]
    for u_raw, v_raw in corners:
        u_model = u_raw * scale
        v_model = (v_raw + 50) * scale
        u_back, v_back = scale_to_raw(u_model, v_model, fmap.geom)
        assert u_back == pytest.approx(u_raw, abs=1e-6)
        assert v_back == pytest.approx(v_raw, abs=1e-6)


def test_config_validation():
    with pytest.raises(ValueError, match="unknown model"):
        ExportConfig(model="resnet50")
    with pytest.raises(ValueError, match="divisible"):
        ExportConfig(model="dino-vitb8", input_size=261, stride=4)
    defaults16 = ExportConfig(model="dino-vitb16")
    assert (defaults16.stride, defaults16.input_size) == (8, 520)  # p/2, native
    assert ExportConfig(model="dino-vitb8", input_size=260, stride=4).grid == 64


def test_writer_rejects_bad_payload():
    geom = ExportGeometry(
        src_w=24, src_h=24, patch=8, stride=4,
        raw_w=24, raw_h=24, pad_left=0, pad_top=0,
    )
    assert geom.grid_shape() == (5, 5)
    with pytest.raises(ValueError, match="grid"):
        feature_bytes(np.zeros((4, 4, 3), np.float32), geom)
    bad = np.zeros((5, 5, 3), np.float32)
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError, match="finite"):
        feature_bytes(bad, geom)


def test_cli_export(photo, tmp_path, capsys):
    out = tmp_path / "cli.okpf"
    code = main([
        "--image", str(photo), "--model", "dino-vitb8",
        "--input-size", "68", "--stride", "4", "--out", str(out),
        "--random-weights", "--layers", "1",
    ])
    assert code == 0
    assert "grid=16x16" in capsys.readouterr().out
    fmap = read_feature_file(out)
    assert fmap.data.shape == (16, 16, 768)
    meta = json.loads((tmp_path / "cli.okpf.meta.json").read_text())
    assert meta["resize"] == "bilinear"
    assert meta["stride"] == 4


def test_cli_missing_image_exits_1(tmp_path):
    code = main([
        "--image", str(tmp_path / "nope.png"), "--out", str(tmp_path / "o.okpf"),
        "--random-weights", "--layers", "1",
    ])
    assert code == 1


def test_cli_misaligned_size_exits_2(photo, tmp_path):
    code = main([
        "--image", str(photo), "--input-size", "261", "--stride", "4",
        "--out", str(tmp_path / "o.okpf"), "--random-weights",
    ])
    assert code == 2
