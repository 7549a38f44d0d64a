import numpy as np
import pytest

from okp.features import FeatureMap, GridGeometry


def make_geom(h, w, patch=8, stride=4, raw=False):
    src_h = (h - 1) * stride + patch
    src_w = (w - 1) * stride + patch
    if raw:
        return GridGeometry(src_w, src_h, patch, stride, src_w, src_h, 0, 0)
    return GridGeometry(src_w, src_h, patch, stride)


def make_map(rng, h, w, c, patch=8, stride=4, scale=1.0, raw=False):
    data = rng.normal(0.0, scale, (h, w, c)).astype(np.float32)
    return FeatureMap(data, make_geom(h, w, patch, stride, raw=raw))


@pytest.fixture
def rng():
    return np.random.default_rng(0)
