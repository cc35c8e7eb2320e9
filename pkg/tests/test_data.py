import json
import math
import shutil

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ooaf.core import CATEGORY_NAMES, FeatureCloud, ObjectPair, category_by_name
from ooaf.data import (
    ContactAnnotation,
    ManifestError,
    OcclusionError,
    apply_occlusion,
    build_manifest,
    contact_points,
    functional_part_ids,
    generate_dataset,
    generate_pair,
    occlusion_mask,
    part_vectors,
    propagate_labels,
    synth_features,
    synthetic_benchmark,
)

from oracles import propagate_ref

SIGMA = 0.06


def blank_cloud(points, k=5):
    return FeatureCloud(points, np.zeros((len(points), 2)), np.zeros((len(points), k)))


# -- label propagation


def test_contact_point_gets_one():
    pts = np.random.default_rng(0).normal(size=(40, 3))
    out = propagate_labels(blank_cloud(pts), ContactAnnotation(pts[[3, 17]], SIGMA), category_by_name("hang"))
    assert out.affordance[3, 1] == 1.0 and out.affordance[17, 1] == 1.0
    # other channels untouched
    assert np.all(out.affordance[:, [0, 2, 3, 4]] == 0.0)


def test_half_value_distance():
    r = SIGMA * math.sqrt(2 * math.log(2))
    pts = np.array([[0.0, 0, 0], [r, 0, 0], [0, 0, -r]])
    out = propagate_labels(blank_cloud(pts), ContactAnnotation(pts[:1], SIGMA), 0)
    assert abs(out.affordance[1, 0] - 0.5) < 1e-9
    assert abs(out.affordance[2, 0] - 0.5) < 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4))
def test_max_over_contacts(seed, n_contacts):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-0.2, 0.2, size=(60, 3))
    contacts = pts[rng.choice(60, n_contacts, replace=False)]
    out = propagate_labels(blank_cloud(pts, 1), ContactAnnotation(contacts, SIGMA), 0)
    np.testing.assert_allclose(out.affordance[:, 0], propagate_ref(pts, contacts, SIGMA), atol=1e-15)


def test_monotone_decay_1000():
    rng = np.random.default_rng(4)
    contacts = rng.normal(size=(3, 3)) * 0.1
    pts = rng.normal(size=(1000, 3)) * 0.2
    vals = propagate_labels(blank_cloud(pts, 1), ContactAnnotation(contacts, SIGMA), 0).affordance[:, 0]
    nearest = np.min(np.linalg.norm(pts[:, None] - contacts[None], axis=-1), axis=1)
    order = np.argsort(nearest)
    assert np.all(np.diff(vals[order]) <= 0.0)
    assert np.all((vals >= 0) & (vals <= 1))


def test_tiny_values_clamp_to_zero():
    pts = np.array([[0.0, 0, 0], [1.0, 0, 0]])
    out = propagate_labels(blank_cloud(pts, 1), ContactAnnotation(pts[:1], SIGMA), 0)
    assert out.affordance[1, 0] == 0.0


def test_propagation_errors():
    pts = np.zeros((3, 3))
    with pytest.raises(ValueError, match="empty"):
        propagate_labels(blank_cloud(pts, 1), ContactAnnotation(np.zeros((0, 3)), SIGMA), 0)
    with pytest.raises(ValueError, match="channel"):
        propagate_labels(blank_cloud(pts, 1), ContactAnnotation(pts[:1], SIGMA), 3)
    with pytest.raises(ValueError):
        ContactAnnotation(pts[:1], 0.0)


def test_contact_must_lie_on_cloud():
    pts = np.eye(3)
    ann = ContactAnnotation([[0.5, 0.5, 0.5]], SIGMA)
    with pytest.raises(ValueError, match="not on the cloud"):
        ann.check_on_cloud(blank_cloud(pts, 1))
    ContactAnnotation(pts[:1] + 1e-8, SIGMA).check_on_cloud(blank_cloud(pts, 1))


# -- generator


@pytest.mark.parametrize("name", CATEGORY_NAMES)
def test_generate_deterministic(name):
    a = generate_pair(name, 11, 0.3, n_points=256)
    b = generate_pair(name, 11, 0.3, n_points=256)
    for ca, cb in ((a.source, b.source), (a.target, b.target)):
        assert ca.points.tobytes() == cb.points.tobytes()
        assert ca.affordance.tobytes() == cb.affordance.tobytes()
        assert ca.part_labels.tobytes() == cb.part_labels.tobytes()


@pytest.mark.parametrize("name", CATEGORY_NAMES)
def test_zero_perturbation_ignores_seed(name):
    a = generate_pair(name, 1, 0.0, n_points=256)
    b = generate_pair(name, 2, 0.0, n_points=256)
    np.testing.assert_array_equal(a.source.points, b.source.points)
    np.testing.assert_array_equal(a.target.points, b.target.points)


def test_positive_perturbation_varies():
    a = generate_pair("pour", 1, 0.3, n_points=256)
    b = generate_pair("pour", 2, 0.3, n_points=256)
    assert not np.array_equal(a.source.points, b.source.points)


@pytest.mark.parametrize("name", CATEGORY_NAMES)
def test_gt_max_on_functional_part(name):
    fs, ft = functional_part_ids(name)
    ch = category_by_name(name).id
    for seed in range(100):
        pair = generate_pair(name, seed, 0.5, n_points=256)
        for cloud, fid in ((pair.source, fs), (pair.target, ft)):
            a = cloud.affordance[:, ch]
            assert a.max() == 1.0
            assert cloud.part_labels[int(np.argmax(a))] == fid


def test_contacts_on_functional_part():
    pair = generate_pair("cut", 3, 0.2, n_points=512)
    cs, ct = contact_points(pair)
    assert len(cs) > 0 and len(ct) > 0


def test_generator_errors():
    with pytest.raises(ValueError):
        generate_pair("stir", 0)
    with pytest.raises(ValueError):
        generate_pair("pour", 0, 0.7)


# -- stand-in features


def test_features_noise_free_part_consistent():
    pair = synth_features(generate_pair("hang", 0, 0.1, n_points=256), 64, feature_seed=3)
    for cloud in (pair.source, pair.target):
        for pid in np.unique(cloud.part_labels):
            rows = cloud.features[cloud.part_labels == pid]
            assert np.all(rows == rows[0])


def test_part_vectors_separated():
    v = part_vectors(256, 0)
    cos = np.abs(v @ v.T)
    np.fill_diagonal(cos, 0)
    assert cos.max() < 0.3
    np.testing.assert_allclose(np.linalg.norm(v, axis=1), 1.0)


def test_part_vectors_shared_across_categories():
    a = synth_features(generate_pair("pour", 0, n_points=128), 32, 5)
    b = synth_features(generate_pair("cut", 0, n_points=128), 32, 5)
    table = part_vectors(32, 5)
    np.testing.assert_array_equal(a.source.features, table[a.source.part_labels])
    np.testing.assert_array_equal(b.target.features, table[b.target.part_labels])


def test_features_none_mode_and_noise_determinism():
    pair = generate_pair("press", 0, n_points=128)
    assert np.all(synth_features(pair, 16, mode="none").source.features == 0.0)
    n1 = synth_features(pair, 16, 1, noise=0.1)
    n2 = synth_features(pair, 16, 1, noise=0.1)
    assert n1.source.features.tobytes() == n2.source.features.tobytes()
    with pytest.raises(ValueError):
        synth_features(pair, 16, mode="dino")
    bare = FeatureCloud(np.zeros((2, 3)), np.zeros((2, 0)))
    with pytest.raises(ValueError, match="part labels"):
        synth_features(ObjectPair(bare, bare, pair.category), 4)


# -- occlusion


def test_occlusion_band_2048():
    cloud = generate_pair("insert", 0, n_points=2048).target
    out = apply_occlusion(cloud, 0.10, seed=0)
    assert 1802 <= len(out) <= 1884


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.05, 0.6))
def test_occlusion_is_ball_subset(seed, level):
    cloud = generate_pair("pour", 0, n_points=512).source
    keep, r = occlusion_mask(cloud, level, seed)
    removed = cloud.points[~keep]
    assert abs(removed.shape[0] / len(cloud) - level) <= 0.02 + 1e-12
    if len(removed) > 1:
        diam = np.max(np.linalg.norm(removed[:, None] - removed[None], axis=-1))
        assert diam <= 2 * r + 1e-9
    out = apply_occlusion(cloud, level, seed)
    np.testing.assert_array_equal(out.points, cloud.points[keep])
    np.testing.assert_array_equal(out.affordance, cloud.affordance[keep])
    np.testing.assert_array_equal(out.features, cloud.features[keep])


def test_occlusion_seeded():
    cloud = generate_pair("cut", 0, n_points=512).target
    a, _ = occlusion_mask(cloud, 0.3, 7)
    b, _ = occlusion_mask(cloud, 0.3, 7)
    np.testing.assert_array_equal(a, b)


def test_occlusion_errors():
    cloud = generate_pair("cut", 0, n_points=128).target
    with pytest.raises(ValueError):
        apply_occlusion(cloud, 0.9)
    # all points coincide: no radius separates any fraction
    flat = FeatureCloud(np.zeros((50, 3)), np.zeros((50, 1)))
    with pytest.raises(OcclusionError, match="occlusion infeasible"):
        apply_occlusion(flat, 0.3)


# -- manifest


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    generate_dataset(root, n_eval=2, n_points=64, feature_dim=8)
    return root


def test_manifest_happy_path(small_dataset):
    m = build_manifest(small_dataset)
    assert m.num_categories == 5
    assert sorted(c.name for c in m.categories) == sorted(CATEGORY_NAMES)
    assert [c.id for c in m.categories] == list(range(5))
    assert all(len(m.eval[c.id]) == 2 for c in m.categories)
    pairs = m.train_pairs()
    assert [p.category.id for p in pairs] == list(range(5))
    assert len(m.eval_pairs()) == 10


def test_manifest_duplicate_train(small_dataset, tmp_path):
    root = tmp_path / "ds"
    shutil.copytree(small_dataset, root)
    train = root / "pour" / "train"
    extra = train / "second"
    extra.mkdir()
    for f in ("src.pc", "tgt.pc", "meta.json"):
        shutil.move(str(train / f), str(train / f"tmp_{f}"))
    first = train / "first"
    first.mkdir()
    for f in ("src.pc", "tgt.pc", "meta.json"):
        shutil.copy(train / f"tmp_{f}", first / f)
        shutil.move(str(train / f"tmp_{f}"), str(extra / f))
    with pytest.raises(ManifestError, match="pour"):
        build_manifest(root)


def test_manifest_eval_listed_as_train(small_dataset, tmp_path):
    root = tmp_path / "ds"
    shutil.copytree(small_dataset, root)
    ev = root / "cut" / "eval" / "000"
    # replace the eval sample with links to the training files
    for f in ("src.pc", "tgt.pc"):
        (ev / f).unlink()
        (ev / f).symlink_to(root / "cut" / "train" / f)
    with pytest.raises(ManifestError, match="both train and eval"):
        build_manifest(root)


def test_manifest_other_errors(tmp_path):
    with pytest.raises(ManifestError):
        build_manifest(tmp_path / "missing")
    (tmp_path / "empty").mkdir()
    with pytest.raises(ManifestError, match="no categories"):
        build_manifest(tmp_path / "empty")
    (tmp_path / "x" / "pour").mkdir(parents=True)
    with pytest.raises(ManifestError, match="train"):
        build_manifest(tmp_path / "x")


def test_written_meta(small_dataset):
    meta = json.loads((small_dataset / "hang" / "eval" / "001" / "meta.json").read_text())
    assert meta == {"category_id": 1, "category_name": "hang", "instance_seed": 2}


def test_benchmark_matches_dataset_on_disk(small_dataset):
    train, evals = synthetic_benchmark(n_eval=2, n_points=64, feature_dim=8, noise=0.0)
    m = build_manifest(small_dataset)
    disk = m.train_pairs()
    for a, b in zip(train, disk):
        np.testing.assert_allclose(a.source.points, b.source.points, rtol=1e-8)
        np.testing.assert_allclose(a.target.features, b.target.features, rtol=1e-8)
    assert len(evals) == 10
