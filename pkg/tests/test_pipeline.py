import numpy as np
import pytest

from deepbet.errors import NoForeground, ShapeMismatch
from deepbet.network import build_linknet, config_2d, config_3d
from deepbet.pipeline import (PipelineConfig, expand_bbox, minimal_bbox,
                              multi_slice_aggregate, multi_view_aggregate,
                              predict_slices_2d, predict_stage1, predict_stage2_3d,
                              scale_box)
from deepbet.volume import BoundingBox, Volume


# --- bounding boxes ---------------------------------------------------------

def test_minimal_bbox_single_voxel():
    m = np.zeros((10, 10, 10), dtype=np.float32)
    m[5, 5, 5] = 1.0
    assert minimal_bbox(m, 0.5) == BoundingBox((5, 5, 5), (6, 6, 6))


def test_minimal_bbox_empty_raises():
    with pytest.raises(NoForeground):
        minimal_bbox(np.zeros((4, 4, 4), dtype=np.float32), 0.5)


def test_minimal_bbox_vs_exhaustive_scan():
    rng = np.random.default_rng(0)
    for _ in range(30):
        m = (rng.random((8, 9, 10)) > 0.7).astype(np.float32)
        if not m.any():
            continue
        got = minimal_bbox(m, 0.5)
        # exhaustive scan oracle
        lo = [None] * 3
        hi = [None] * 3
        for x in range(8):
            for y in range(9):
                for z in range(10):
                    if m[x, y, z] >= 0.5:
                        for a, c in enumerate((x, y, z)):
                            lo[a] = c if lo[a] is None else min(lo[a], c)
                            hi[a] = c + 1 if hi[a] is None else max(hi[a], c + 1)
        assert got == BoundingBox(tuple(lo), tuple(hi))


def test_expand_bbox_ten_percent_rule():
    # edge 60, margin 6 per side
    b = BoundingBox((20, 20, 20), (80, 80, 80))
    out = expand_bbox(b, 0.10, (100, 100, 100))
    assert out == BoundingBox((14, 14, 14), (86, 86, 86))


def test_expand_bbox_zero_margin_identity():
    b = BoundingBox((3, 4, 5), (7, 8, 9))
    assert expand_bbox(b, 0.0, (20, 20, 20)) == b


def test_expand_bbox_clamps_at_borders():
    b = BoundingBox((0, 0, 0), (50, 50, 50))
    out = expand_bbox(b, 0.10, (60, 60, 60))
    assert out == BoundingBox((0, 0, 0), (55, 55, 55))


def test_expand_bbox_rounds_half_up():
    b = BoundingBox((10, 10, 10), (15, 15, 15))   # edge 5, margin 0.5 -> 1
    out = expand_bbox(b, 0.10, (30, 30, 30))
    assert out == BoundingBox((9, 9, 9), (16, 16, 16))


def test_scale_box_conservative():
    b = BoundingBox((4, 4, 4), (8, 8, 8))
    up = scale_box(b, (16, 16, 16), (64, 64, 64))
    assert up == BoundingBox((16, 16, 16), (32, 32, 32))
    odd = scale_box(BoundingBox((3, 3, 3), (5, 5, 5)), (10, 10, 10), (64, 64, 64))
    assert odd == BoundingBox((19, 19, 19), (32, 32, 32))


# --- aggregation -------------------------------------------------------------

def naive_clamped_median(stack, n, axis):
    s = np.moveaxis(stack, axis, 0)
    out = np.empty_like(s)
    h = n // 2
    for i in range(s.shape[0]):
        window = s[max(0, i - h):min(s.shape[0], i + h + 1)]
        srt = np.sort(window, axis=0)
        out[i] = srt[(len(window) - 1) // 2]   # lower median
    return np.moveaxis(out, 0, axis)


def test_multi_slice_constant_unchanged():
    stack = np.full((9, 4, 4), 0.7, dtype=np.float32)
    assert np.array_equal(multi_slice_aggregate(stack, 5, 0), stack)


def test_multi_slice_rejects_one_corrupted_slice():
    stack = np.full((9, 4, 4), 0.3, dtype=np.float32)
    stack[4] = 0.95
    out = multi_slice_aggregate(stack, 5, 0)
    assert np.allclose(out[4], 0.3)   # median of {c, c, x, c, c} = c


def test_multi_slice_n1_identity():
    rng = np.random.default_rng(1)
    stack = rng.random((7, 3, 3)).astype(np.float32)
    assert np.array_equal(multi_slice_aggregate(stack, 1, 0), stack)


@pytest.mark.parametrize("axis", [0, 1, 2])
def test_multi_slice_matches_naive_loop(axis):
    rng = np.random.default_rng(2)
    stack = rng.random((8, 7, 6)).astype(np.float32)
    got = multi_slice_aggregate(stack, 5, axis)
    want = naive_clamped_median(stack, 5, axis)
    assert np.array_equal(got, want)


def test_multi_slice_bounded_by_inputs():
    rng = np.random.default_rng(3)
    stack = rng.random((10, 5, 5)).astype(np.float32)
    out = multi_slice_aggregate(stack, 5, 0)
    assert out.min() >= stack.min() and out.max() <= stack.max()


def test_multi_view_median_examples():
    a = np.full((3, 3, 3), 0.2, dtype=np.float32)
    b = np.full((3, 3, 3), 0.5, dtype=np.float32)
    c = np.full((3, 3, 3), 0.9, dtype=np.float32)
    assert np.allclose(multi_view_aggregate(a, b, c), 0.5)
    same = multi_view_aggregate(b, b, b)
    assert np.array_equal(same, b)


def test_multi_view_permutation_invariant():
    rng = np.random.default_rng(4)
    vols = [rng.random((4, 4, 4)).astype(np.float32) for _ in range(3)]
    base = multi_view_aggregate(*vols)
    assert np.array_equal(base, multi_view_aggregate(vols[2], vols[0], vols[1]))
    assert np.array_equal(base, multi_view_aggregate(vols[1], vols[2], vols[0]))


def test_median_equals_majority_vote_binary():
    # full enumeration over {0,1}^3
    for a in (0.0, 1.0):
        for b in (0.0, 1.0):
            for c in (0.0, 1.0):
                vols = [np.full((2, 2, 2), v, dtype=np.float32) for v in (a, b, c)]
                med = multi_view_aggregate(*vols)
                majority = 1.0 if (a + b + c) >= 2 else 0.0
                assert np.all(med == majority)


def test_multi_view_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        multi_view_aggregate(np.zeros((2, 2, 2)), np.zeros((2, 2, 2)),
                             np.zeros((2, 2, 3)))


# --- network-driven stages ----------------------------------------------------

@pytest.fixture(scope="module")
def small_cfg():
    return PipelineConfig(stage1_size=32, stage2_size=64)


@pytest.fixture(scope="module")
def w3d():
    return build_linknet(config_3d(8), seed=0)


def test_predict_stage1_contract(small_cfg, w3d):
    rng = np.random.default_rng(5)
    v = Volume(rng.normal(size=(48, 40, 44)).astype(np.float32), np.eye(4))
    out = predict_stage1(v, w3d, small_cfg)
    assert out.dims == (32, 32, 32)
    assert np.all((out.data > 0) & (out.data < 1))


def test_predict_stage2_3d_support_and_dims(small_cfg, w3d):
    rng = np.random.default_rng(6)
    v = Volume(rng.normal(size=(48, 48, 48)).astype(np.float32), np.eye(4))
    box = BoundingBox((8, 10, 12), (40, 42, 44))
    out = predict_stage2_3d(v, box, w3d, small_cfg)
    assert out.dims == v.dims
    outside = np.ones(v.dims, dtype=bool)
    outside[box.slices()] = False
    assert np.all(out.data[outside] == 0.0)
    assert out.data[box.slices()].max() > 0.0


def test_predict_slices_2d_contract(small_cfg):
    w2d = build_linknet(config_2d(8), seed=1)
    rng = np.random.default_rng(7)
    v = rng.normal(size=(64, 64, 64)).astype(np.float32)
    for view, axis in (("sagittal", 0), ("coronal", 1), ("axial", 2)):
        out = predict_slices_2d(v, w2d, view)
        assert out.shape == v.shape
        assert np.all((out > 0) & (out < 1))


def test_predict_slices_2d_constant_input():
    w2d = build_linknet(config_2d(8), seed=2)
    v = np.full((32, 32, 32), 0.25, dtype=np.float32)
    out = predict_slices_2d(v, w2d, "axial")
    # every slice sees the same 5 constant channels -> identical outputs
    assert np.allclose(out, out[:, :, :1], atol=1e-6)


def test_slice_neighbor_replication():
    # the 5-slice window at i=0 must be (0, 0, 0, 1, 2): checked against a
    # reference indexer
    n, half = 6, 2
    nbrs = np.clip(np.arange(n)[:, None] + np.arange(-half, half + 1)[None, :],
                   0, n - 1)
    def reference_indexer(i):
        return tuple(min(max(i + d, 0), n - 1) for d in range(-2, 3))
    for i in range(n):
        assert tuple(nbrs[i]) == reference_indexer(i)
    assert tuple(nbrs[0]) == (0, 0, 0, 1, 2)
    assert tuple(nbrs[n - 1]) == (3, 4, 5, 5, 5)


def test_pipeline_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(stage1_size=50)
    with pytest.raises(ValueError):
        PipelineConfig(multi_slice_n=4)
    with pytest.raises(ValueError):
        PipelineConfig(binarize_threshold=0.0)
    with pytest.raises(ValueError):
        PipelineConfig(views=("sagittal", "oblique"))
    with pytest.raises(ValueError):
        PipelineConfig(mode="4d")
