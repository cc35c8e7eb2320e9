import numpy as np
import pytest

from ooaf.core import FeatureCloud
from ooaf.render import colorize, heat_colors, render_ppm


def cloud(points, a):
    points = np.asarray(points, dtype=np.float64)
    return FeatureCloud(points, np.zeros((len(points), 1)), np.asarray(a, dtype=np.float64)[:, None])


def decode(ppm):
    lines = ppm.split(b"\n", 3)
    assert lines[0] == b"P6" and lines[2] == b"255"
    w, h = map(int, lines[1].split())
    return np.frombuffer(lines[3], dtype=np.uint8).reshape(h, w, 3)


def test_heat_color_stops():
    c = heat_colors(np.array([0.0, 0.25, 0.5, 0.75, 1.0, -3.0, 7.0]))
    np.testing.assert_array_equal(c, [[0, 0, 1], [0, 1, 1], [0, 1, 0], [1, 1, 0], [1, 0, 0], [0, 0, 1], [1, 0, 0]])
    mid = heat_colors(np.array([0.125]))
    np.testing.assert_allclose(mid, [[0, 0.5, 1]])


def test_colorize_replaces_features():
    c = cloud(np.random.default_rng(0).normal(size=(10, 3)), np.linspace(0, 1, 10))
    out = colorize(c, 0)
    assert out.features.shape == (10, 3)
    np.testing.assert_array_equal(out.affordance, c.affordance)
    with pytest.raises(ValueError, match="channel 1"):
        colorize(c, 1)


def test_ppm_header_and_background():
    c = cloud(np.random.default_rng(1).normal(size=(50, 3)), np.zeros(50))
    img = decode(render_ppm(c, 0, size=40))
    assert img.shape == (40, 40, 3)
    # every drawn pixel is pure blue, the rest white
    colors = {tuple(px) for px in img.reshape(-1, 3)}
    assert colors == {(0, 0, 255), (255, 255, 255)}


def test_nearer_point_wins():
    # two points on the same view ray, camera looks along -x when azimuth 0, elevation 0
    c = cloud([[1.0, 0, 0], [-1.0, 0, 0], [0, 1, 1], [0, -1, -1]], [1.0, 0.0, 0.5, 0.5])
    img = decode(render_ppm(c, 0, size=33, azimuth=0.0, elevation=0.0, splat=0))
    assert tuple(img[16, 16]) == (255, 0, 0)
    img = decode(render_ppm(c, 0, size=33, azimuth=180.0, elevation=0.0, splat=0))
    assert tuple(img[16, 16]) == (0, 0, 255)


def test_render_deterministic_and_validated():
    c = cloud(np.random.default_rng(2).normal(size=(200, 3)), np.random.default_rng(3).uniform(size=200))
    assert render_ppm(c, 0, size=64) == render_ppm(c, 0, size=64)
    with pytest.raises(ValueError, match=">= 8"):
        render_ppm(c, 0, size=4)
    with pytest.raises(ValueError, match="channel"):
        render_ppm(c, 2)
