import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ooaf.fusion import (
    CameraView,
    bilinear_sample,
    fuse_cloud,
    load_camera,
    look_at,
    project_to_view,
    read_feature_file,
    read_pgm16,
    render_sphere_view,
    save_camera,
    view_weight,
    write_feature_file,
    write_pgm16,
)

from oracles import bilinear_ref, fuse_ref, project_ref

K640 = np.array([[500.0, 0, 320], [0, 500.0, 240], [0, 0, 1]])
MU = 0.02


def flat_view(depth=2.0, feat=None, w=640, h=480, n=3):
    """Camera at the origin looking down +z at a fronto-parallel wall."""
    if feat is None:
        feat = np.random.default_rng(0).normal(size=(h, w, n))
    return CameraView(K640, np.eye(4), w, h, np.full((h, w), depth), feat)


def sphere_views():
    eyes = [(2.0, 0, 0.3), (0, 2.0, -0.2), (-1.5, -1.3, 0.5), (0.2, -0.4, 2.1)]
    return [render_sphere_view(e) for e in eyes]


def sphere_surface(n, seed):
    v = np.random.default_rng(seed).normal(size=(n, 3))
    return 0.5 * v / np.linalg.norm(v, axis=1, keepdims=True)


# -- projection


def test_optical_axis():
    u, r, ok = project_to_view([0, 0, 2.0], flat_view())
    np.testing.assert_allclose(u, [320, 240])
    assert r == 2.0 and ok


def test_behind_camera():
    _, r, ok = project_to_view([0, 0, -1.0], flat_view())
    assert r < 0 and not ok


def test_outside_image():
    _, _, ok = project_to_view([10.0, 0, 1.0], flat_view())
    assert not ok


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_projection_matches_matrix_oracle(seed):
    rng = np.random.default_rng(seed)
    view = CameraView(K640, look_at(rng.normal(size=3) * 3 + [0, 0, 5]), 640, 480, np.ones((480, 640)), np.zeros((480, 640, 1)))
    x = rng.normal(size=3)
    u, r, _ = project_to_view(x, view)
    u_ref, z_ref = project_ref(x, view.intrinsics, view.extrinsic)
    assert np.max(np.abs(u - u_ref)) < 1e-9
    assert abs(r - z_ref) < 1e-12


# -- bilinear


def test_bilinear_lattice_and_midpoint():
    img = np.arange(12, dtype=float).reshape(3, 4)
    v, _ = bilinear_sample(img, [2.0, 1.0])
    assert v == img[1, 2]
    two = np.array([[0.0, 1.0]])
    v, _ = bilinear_sample(two, [0.5, 0.0])
    assert v == 0.5
    # last row / column are reachable without reading past the edge
    v, _ = bilinear_sample(img, [3.0, 2.0])
    assert v == img[2, 3]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_bilinear_matches_corner_sum(seed):
    rng = np.random.default_rng(seed)
    img = rng.normal(size=(7, 9, 3))
    u = rng.uniform([0, 0], [8, 6])
    v, _ = bilinear_sample(img, u)
    ref, _ = bilinear_ref(img, u)
    assert np.max(np.abs(v - ref)) < 1e-12


def test_zero_depth_corner_invalidates():
    depth = np.ones((4, 4))
    depth[1, 2] = 0.0
    _, valid = bilinear_sample(depth, [1.5, 0.5])
    assert not valid
    _, valid = bilinear_sample(depth, [0.5, 0.5])
    assert valid


# -- weights


def test_surface_point_full_weight():
    fw = view_weight([0, 0, 2.0], flat_view(), MU)
    assert fw.v == 1 and fw.w == 1.0 and fw.d == 0.0


def test_deep_occlusion_zero():
    fw = view_weight([0, 0, 2.0 + 5 * MU], flat_view(), MU)
    assert fw.v == 0 and fw.w == 0.0
    assert abs(fw.d_trunc) <= MU


def test_half_mu_weight():
    fw = view_weight([0, 0, 2.0 - MU / 2], flat_view(), MU)
    assert fw.w == pytest.approx(math.exp(-0.5), abs=1e-12)
    assert fw.w == pytest.approx(0.6065306597, abs=1e-9)


def test_in_front_stays_visible():
    fw = view_weight([0, 0, 1.0], flat_view(), MU)
    assert fw.v == 1 and fw.d_trunc == MU
    assert fw.w == pytest.approx(math.exp(-2.0))


def test_bad_mu():
    with pytest.raises(ValueError):
        view_weight([0, 0, 2.0], flat_view(), 0.0)


# -- fusion


def test_single_view_exact():
    view = flat_view()
    res = fuse_cloud(np.array([[0.0, 0, 2.0]]), [view], MU)
    np.testing.assert_array_equal(res.cloud.features[0], view.featmap[240, 320])
    assert res.coverage[0] == 1


def test_two_equal_views_average():
    rng = np.random.default_rng(5)
    f = rng.normal(size=(480, 640, 3))
    g = rng.normal(size=(480, 640, 3))
    res = fuse_cloud(np.array([[0.0, 0, 2.0]]), [flat_view(feat=f), flat_view(feat=g)], MU)
    np.testing.assert_allclose(res.cloud.features[0], (f[240, 320] + g[240, 320]) / 2, atol=1e-15)
    assert res.coverage[0] == 2


def test_unseen_point_zero():
    res = fuse_cloud(np.array([[0.0, 0, -3.0]]), [flat_view()], MU)
    assert res.coverage[0] == 0
    np.testing.assert_array_equal(res.cloud.features[0], 0.0)


def test_mismatched_feature_dims():
    with pytest.raises(ValueError, match="feature dimension"):
        fuse_cloud(np.zeros((1, 3)), [flat_view(n=2), flat_view(n=3)], MU)


def test_sphere_scene_matches_oracle():
    views = sphere_views()
    pts = sphere_surface(300, 0)
    res = fuse_cloud(pts, views, MU)
    ref = fuse_ref(pts, views, MU)
    assert np.max(np.abs(res.cloud.features - ref)) < 1e-9
    # most of the sphere is seen; silhouette points with an empty depth corner are not
    assert np.mean(res.coverage >= 1) > 0.7


def test_convex_envelope_and_order_invariance():
    views = sphere_views()
    pts = sphere_surface(200, 1)
    base = fuse_cloud(pts, views, MU)
    rng = np.random.default_rng(0)
    for _ in range(3):
        perm = rng.permutation(len(views))
        out = fuse_cloud(pts, [views[i] for i in perm], MU)
        np.testing.assert_array_equal(out.cloud.features, base.cloud.features)
    # every fused coordinate lies between the smallest and largest per-view sample
    from ooaf.fusion import _weights, bilinear_sample_many

    lo = np.full(base.cloud.features.shape, np.inf)
    hi = np.full(base.cloud.features.shape, -np.inf)
    for view in views:
        u, *_, v, w = _weights(pts, view, MU)
        vals, _ = bilinear_sample_many(view.featmap, u[v])
        lo[v] = np.minimum(lo[v], vals)
        hi[v] = np.maximum(hi[v], vals)
    seen = base.coverage > 0
    f = base.cloud.features[seen]
    assert np.all(f >= lo[seen] - 1e-12) and np.all(f <= hi[seen] + 1e-12)


def test_removing_zero_weight_view_changes_nothing():
    views = sphere_views()
    # point on the far side of the sphere from view 0
    eye = np.array([2.0, 0, 0.3])
    x = -0.5 * eye / np.linalg.norm(eye)
    fw = view_weight(x, views[0], MU)
    assert fw.w == 0.0 and fw.v == 0
    full = fuse_cloud(x[None], views, MU)
    rest = fuse_cloud(x[None], views[1:], MU)
    np.testing.assert_array_equal(full.cloud.features, rest.cloud.features)


def test_mask_fused_like_features():
    v1 = flat_view()
    m = np.random.default_rng(2).uniform(size=(480, 640, 2))
    v2 = CameraView(v1.intrinsics, v1.extrinsic, 640, 480, v1.depth, v1.featmap, m)
    res = fuse_cloud(np.array([[0.0, 0, 2.0]]), [v2], MU)
    np.testing.assert_array_equal(res.mask[0], m[240, 320])


def test_camera_validation():
    with pytest.raises(ValueError):
        CameraView(np.eye(3) * 2, np.eye(4), 4, 4, np.ones((4, 4)), np.ones((4, 4, 1)))
    with pytest.raises(ValueError):
        CameraView(np.eye(3), np.eye(4), 4, 4, -np.ones((4, 4)), np.ones((4, 4, 1)))
    with pytest.raises(ValueError):
        CameraView(np.eye(3), np.eye(4), 4, 4, np.ones((4, 4)), np.ones((3, 4, 1)))


# -- file formats


def test_camera_files_round_trip(tmp_path):
    view = render_sphere_view((2.0, 0.3, 0.1), n_feat=4)
    save_camera(view, tmp_path / "cam.json")
    back = load_camera(tmp_path / "cam.json")
    np.testing.assert_array_equal(back.intrinsics, view.intrinsics)
    np.testing.assert_array_equal(back.extrinsic, view.extrinsic)
    # depth is quantized to millimeters, features to float32
    assert np.max(np.abs(back.depth - view.depth)) <= 0.0005 + 1e-12
    np.testing.assert_array_equal(back.featmap, view.featmap.astype(np.float32))


def test_pgm_and_feature_files(tmp_path):
    depth = np.array([[0.0, 1.234], [65.535, 0.0005]])
    write_pgm16(tmp_path / "d.pgm", depth)
    np.testing.assert_allclose(read_pgm16(tmp_path / "d.pgm"), [[0, 1.234], [65.535, 0.0]], atol=1e-12)
    f = np.random.default_rng(0).normal(size=(3, 5, 2)).astype(np.float32)
    write_feature_file(tmp_path / "f.bin", f)
    np.testing.assert_array_equal(read_feature_file(tmp_path / "f.bin"), f)
