import numpy as np
import pytest

from fieldbounds.synth import (
    SceneSpec, boundary_from_labels, chamfer_distance, cloud_masks, gen_fields, gen_scene,
    gen_timeseries,
)


def test_single_field():
    labels, gt = gen_fields(SceneSpec(seed=3, n_fields=1))
    assert (labels == 1).all()
    assert not gt.boundary.any()
    assert gt.extent.all()
    r, c = np.unravel_index(np.argmax(gt.distance), gt.distance.shape)
    assert abs(r - 31.5) <= 1.5 and abs(c - 31.5) <= 1.5
    assert gt.distance.max() == 1.0


def test_fields_deterministic():
    a = gen_fields(SceneSpec(seed=11, n_fields=7))
    b = gen_fields(SceneSpec(seed=11, n_fields=7))
    np.testing.assert_array_equal(a[0], b[0])
    for x, y in zip(a[1].layers(), b[1].layers()):
        assert x.tobytes() == y.tobytes()
    assert not np.array_equal(a[0], gen_fields(SceneSpec(seed=12, n_fields=7))[0])


def test_boundary_neighbourhood_oracle():
    labels, gt = gen_fields(SceneSpec(seed=5, n_fields=8, n_background=2))
    H, W = labels.shape
    for r in range(H):
        for c in range(W):
            seen = {labels[r, c]}
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                if 0 <= r + dr < H and 0 <= c + dc < W:
                    seen.add(labels[r + dr, c + dc])
            assert bool(gt.boundary[r, c]) == (len(seen) >= 2)
    np.testing.assert_array_equal(boundary_from_labels(labels), gt.boundary > 0)


def test_gt_ranges():
    _, gt = gen_fields(SceneSpec(seed=2, n_fields=9, n_background=3))
    for layer in gt.layers():
        assert layer.min() >= 0 and layer.max() <= 1
    assert not (gt.distance[gt.extent == 0]).any()


def test_chamfer_against_brute_force(rng):
    m = np.ones((12, 15), bool)
    m[rng.integers(0, 12, 6), rng.integers(0, 15, 6)] = False
    d = chamfer_distance(m)
    pad = np.pad(m, 1)
    outside = np.argwhere(~pad)
    for r, c in np.argwhere(m):
        exact = np.min(np.hypot(outside[:, 0] - (r + 1), outside[:, 1] - (c + 1)))
        # 3-4 chamfer is within ~8% of Euclidean
        assert abs(d[r, c] - exact) <= 0.09 * exact + 1e-12


def test_clouds_off():
    spec = SceneSpec(seed=1, T=6, cloud_fraction=0.0)
    assert not cloud_masks(spec).any()
    labels, _ = gen_fields(spec)
    assert not gen_timeseries(spec, labels)[2].any()


@pytest.mark.parametrize("fraction", [0.1, 0.2, 0.3])
def test_cloud_coverage_and_union(fraction):
    for seed in range(5):
        m = cloud_masks(SceneSpec(seed=seed, T=8, cloud_fraction=fraction))
        per_t = m.mean(axis=(1, 2))
        assert np.all(np.abs(per_t - fraction) <= 0.05)
        assert 1 - m.all(axis=0).mean() >= 0.99


def test_sar_unchanged_by_clouds():
    base = gen_scene(SceneSpec(seed=4, T=5))
    cloudy = gen_scene(SceneSpec(seed=4, T=5, cloud_fraction=0.25, cloud_speed_px=3))
    assert base[3].tobytes() == cloudy[3].tobytes()
    assert base[2].tobytes() != cloudy[2].tobytes()


def test_stream_shapes_and_ranges():
    labels, gt, s2, s1, clouds = gen_scene(SceneSpec(seed=9, T=4, cloud_fraction=0.2))
    assert s2.shape == (4, 4, 64, 64) and s1.shape == (5, 4, 64, 64) and clouds.shape == (4, 64, 64)
    assert s1[1:3].min() >= 0 and s1[1:3].max() <= 1
    assert s1[3:].min() > 0
    np.testing.assert_allclose(s2[:, clouds].mean(), 0.8, atol=0.01)


def test_scene_regeneration_is_byte_identical():
    a = gen_scene(SceneSpec(seed=21, T=3, cloud_fraction=0.2))
    b = gen_scene(SceneSpec(seed=21, T=3, cloud_fraction=0.2))
    for x, y in zip(a, b):
        if hasattr(x, "layers"):
            x, y = x.stack(), y.stack()
        assert x.tobytes() == y.tobytes()


def test_spec_validation():
    with pytest.raises(ValueError):
        SceneSpec(H=32)
    with pytest.raises(ValueError):
        SceneSpec(n_fields=0)
    with pytest.raises(ValueError):
        SceneSpec(cloud_fraction=1.0)


from hypothesis import given, settings  # noqa: E402
from hypothesis import strategies as st  # noqa: E402


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12), st.integers(0, 3))
def test_ground_truth_contracts(seed, n_fields, n_background):
    labels, gt = gen_fields(SceneSpec(seed=seed, n_fields=n_fields, n_background=n_background))
    assert set(np.unique(labels)) <= set(range(n_fields + 1))
    assert np.array_equal(gt.boundary > 0, boundary_from_labels(labels))
    assert not (gt.extent.astype(bool) & gt.boundary.astype(bool)).any()
    assert gt.distance.min() >= 0 and gt.distance.max() <= 1
    assert np.array_equal(gt.distance > 0, gt.extent > 0)
