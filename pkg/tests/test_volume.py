import numpy as np
import pytest

from deepbet.errors import BoxOutOfRange
from deepbet.volume import BoundingBox, Volume, crop, embed


def make_volume(dims=(4, 5, 6), seed=0):
    rng = np.random.default_rng(seed)
    affine = np.eye(4)
    affine[:3, 3] = [1.0, -2.0, 3.0]
    return Volume(rng.normal(size=dims).astype(np.float32), affine)


def test_volume_invariants():
    with pytest.raises(ValueError):
        Volume(np.zeros((2, 2)), np.eye(4))
    with pytest.raises(ValueError):
        Volume(np.zeros((2, 2, 2)), np.eye(4), spacing=(0.0, 1.0, 1.0))
    singular = np.eye(4)
    singular[0, 0] = 0.0
    with pytest.raises(ValueError):
        Volume(np.zeros((2, 2, 2)), singular)
    v = make_volume()
    with pytest.raises(ValueError):
        v.data[0, 0, 0] = 1.0   # immutable


def test_bbox_invariants():
    with pytest.raises(ValueError):
        BoundingBox((0, 0, 0), (0, 1, 1))
    with pytest.raises(ValueError):
        BoundingBox((-1, 0, 0), (1, 1, 1))
    b = BoundingBox((1, 2, 3), (4, 5, 6))
    assert b.shape == (3, 3, 3)


def test_crop_full_box_identity():
    v = make_volume()
    out = crop(v, BoundingBox((0, 0, 0), v.dims))
    assert np.array_equal(out.data, v.data)
    assert np.allclose(out.affine, v.affine)


def test_crop_center_voxel():
    v = make_volume(dims=(3, 3, 3))
    out = crop(v, BoundingBox((1, 1, 1), (2, 2, 2)))
    assert out.dims == (1, 1, 1)
    assert out.data[0, 0, 0] == v.data[1, 1, 1]


def test_crop_preserves_world_coordinates():
    v = make_volume()
    box = BoundingBox((1, 2, 0), (3, 4, 5))
    out = crop(v, box)
    # voxel (0,0,0) of the crop sits where voxel lo sat in the original
    assert np.allclose(out.index_to_world([[0, 0, 0]]),
                       v.index_to_world([np.asarray(box.lo)]))
    assert np.allclose(out.index_to_world([[1, 1, 2]]),
                       v.index_to_world([[2, 3, 2]]))


def test_crop_out_of_range():
    v = make_volume()
    with pytest.raises(BoxOutOfRange):
        crop(v, BoundingBox((0, 0, 0), (10, 2, 2)))


def test_embed_crop_composition():
    v = make_volume(dims=(6, 6, 6), seed=3)
    box = BoundingBox((1, 2, 3), (4, 5, 6))
    c = crop(v, box)
    back = embed(c, box, v.dims)
    inside = np.zeros(v.dims, dtype=bool)
    inside[box.slices()] = True
    assert np.array_equal(back.data[inside], v.data[inside])
    assert np.all(back.data[~inside] == 0.0)
    assert np.allclose(back.affine, v.affine)


def test_embed_full_grid_identity():
    v = make_volume()
    out = embed(v, BoundingBox((0, 0, 0), v.dims), v.dims)
    assert np.array_equal(out.data, v.data)


def test_embed_zero_mask():
    z = Volume(np.zeros((2, 2, 2), dtype=np.float32), np.eye(4))
    out = embed(z, BoundingBox((1, 1, 1), (3, 3, 3)), (5, 5, 5))
    assert np.all(out.data == 0.0)


def test_embed_shape_mismatch():
    v = make_volume(dims=(2, 2, 2))
    with pytest.raises(BoxOutOfRange):
        embed(v, BoundingBox((0, 0, 0), (3, 2, 2)), (5, 5, 5))
