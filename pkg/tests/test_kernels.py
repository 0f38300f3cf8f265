"""Backend equivalence and oracle checks for the volumetric kernels."""

import numpy as np
import pytest

from deepbet import _kernels_py
from deepbet import kernels


def _compiled():
    try:
        from deepbet import _kernels
        return _kernels
    except ImportError:
        return None


BACKENDS = [("python", _kernels_py)]
if _compiled() is not None:
    BACKENDS.append(("compiled", _compiled()))


def flood_fill_oracle(mask: np.ndarray, connectivity: int):
    """Brute-force labeling with an explicit stack; raster-order seeds."""
    mask = np.asarray(mask) != 0
    if connectivity == 6:
        offs = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
    else:
        offs = [(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1)
                for dz in (-1, 0, 1) if (dx, dy, dz) != (0, 0, 0)]
    labels = np.zeros(mask.shape, dtype=np.int32)
    count = 0
    nx, ny, nz = mask.shape
    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                if not mask[x, y, z] or labels[x, y, z]:
                    continue
                count += 1
                stack = [(x, y, z)]
                labels[x, y, z] = count
                while stack:
                    cx, cy, cz = stack.pop()
                    for dx, dy, dz in offs:
                        px, py, pz = cx + dx, cy + dy, cz + dz
                        if (0 <= px < nx and 0 <= py < ny and 0 <= pz < nz
                                and mask[px, py, pz] and not labels[px, py, pz]):
                            labels[px, py, pz] = count
                            stack.append((px, py, pz))
    return labels, count


@pytest.mark.parametrize("name,impl", BACKENDS)
@pytest.mark.parametrize("connectivity", [6, 26])
def test_label_components_vs_oracle(name, impl, connectivity):
    rng = np.random.default_rng(42)
    for density in (0.2, 0.5, 0.8):
        for _ in range(10):
            mask = (rng.random((9, 8, 7)) < density).astype(np.uint8)
            got, n_got = impl.label_components(mask, connectivity)
            want, n_want = flood_fill_oracle(mask, connectivity)
            assert n_got == n_want
            assert np.array_equal(got, want), f"{name} conn={connectivity}"


@pytest.mark.parametrize("name,impl", BACKENDS)
def test_label_components_empty_and_full(name, impl):
    empty = np.zeros((4, 4, 4), dtype=np.uint8)
    labels, n = impl.label_components(empty, 26)
    assert n == 0 and not labels.any()
    full = np.ones((4, 4, 4), dtype=np.uint8)
    labels, n = impl.label_components(full, 6)
    assert n == 1 and np.all(labels == 1)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels unavailable")
def test_sample_grid_backends_agree():
    rng = np.random.default_rng(0)
    src = rng.normal(size=(12, 10, 9)).astype(np.float32)
    mats = []
    m = np.eye(4)
    m[:3, 3] = [0.3, -0.2, 0.5]
    mats.append(m)
    rot = np.eye(4)
    c, s = np.cos(0.3), np.sin(0.3)
    rot[0, 0], rot[0, 1], rot[1, 0], rot[1, 1] = c, s, -s, c
    mats.append(rot)
    proj = np.eye(4)
    proj[3, :3] = [0.01, -0.005, 0.008]
    mats.append(proj)
    for m in mats:
        for mode in ("trilinear", "nearest"):
            a = _kernels_py.sample_grid(src, m, (11, 10, 9), mode)
            b = _compiled().sample_grid(src, m, (11, 10, 9), mode)
            assert np.allclose(a, b, atol=2e-5), mode


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels unavailable")
def test_sample_grid_nearest_half_voxel_ties_agree():
    # downsample by 2 puts every coordinate exactly on an x.5 boundary
    rng = np.random.default_rng(1)
    src = rng.normal(size=(8, 8, 8)).astype(np.float32)
    m = np.diag([2.0, 2.0, 2.0, 1.0])
    m[:3, 3] = 0.5
    a = _kernels_py.sample_grid(src, m, (4, 4, 4), "nearest")
    b = _compiled().sample_grid(src, m, (4, 4, 4), "nearest")
    assert np.array_equal(a, b)


@pytest.mark.parametrize("name,impl", BACKENDS)
def test_sample_grid_identity(name, impl):
    rng = np.random.default_rng(2)
    src = rng.normal(size=(6, 5, 4)).astype(np.float32)
    out = impl.sample_grid(src, np.eye(4), src.shape, "trilinear")
    assert np.allclose(out, src, atol=1e-6)
    out = impl.sample_grid(src, np.eye(4), src.shape, "nearest")
    assert np.array_equal(out, src)


@pytest.mark.parametrize("name,impl", BACKENDS)
def test_sample_grid_border_clamp(name, impl):
    src = np.arange(27, dtype=np.float32).reshape(3, 3, 3)
    m = np.eye(4)
    m[:3, 3] = [-5.0, -5.0, -5.0]   # far outside -> clamps to corner 0,0,0
    out = impl.sample_grid(src, m, (2, 2, 2), "trilinear")
    assert np.all(out == src[0, 0, 0])


def test_selected_backend_exports():
    assert kernels.BACKEND in ("compiled", "python")
    assert callable(kernels.sample_grid)
    assert callable(kernels.label_components)
