"""Grid resampling and rigid/projective warps on the voxel lattice.

Resampling aligns voxel centers (half-voxel convention): output center
``o`` samples input coordinate ``(o + 0.5) * dims/target - 0.5``, so source
and target cover the same world extent.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .volume import Volume


def _scale_matrix(src_dims, target_dims) -> np.ndarray:
    m = np.eye(4)
    for a in range(3):
        s = src_dims[a] / target_dims[a]
        m[a, a] = s
        m[a, 3] = 0.5 * s - 0.5
    return m


def resample(v: Volume, target_dims, mode: str = "trilinear") -> Volume:
    """Resample to `target_dims`, keeping the world extent."""
    target_dims = tuple(int(d) for d in target_dims)
    if any(d < 1 for d in target_dims):
        raise ValueError(f"target dims must be >= 1, got {target_dims}")
    m = _scale_matrix(v.dims, target_dims)
    data = kernels.sample_grid(v.data, m, target_dims, mode)
    affine = v.affine @ m
    spacing = tuple(v.spacing[a] * m[a, a] for a in range(3))
    return Volume(data, affine, spacing, v.dtype_tag)


def warp_array(data: np.ndarray, matrix: np.ndarray, out_dims=None,
               mode: str = "trilinear") -> np.ndarray:
    """Sample `data` through a homogeneous output-index -> input-index map."""
    if out_dims is None:
        out_dims = data.shape
    return kernels.sample_grid(data, matrix, out_dims, mode)


def rotation_about_center(dims, axis: int, angle_deg: float) -> np.ndarray:
    """Output->input map rotating the grid by `angle_deg` about one index axis.

    Positive angles rotate the content counterclockwise in the plane of the
    two remaining axes (the sampling map uses the inverse rotation).
    """
    theta = np.deg2rad(angle_deg)
    c, s = np.cos(theta), np.sin(theta)
    a1, a2 = [a for a in range(3) if a != axis]
    rot = np.eye(4)
    rot[a1, a1] = c
    rot[a1, a2] = s
    rot[a2, a1] = -s
    rot[a2, a2] = c
    center = np.array([(d - 1) / 2.0 for d in dims])
    t_in = np.eye(4)
    t_in[:3, 3] = center
    t_out = np.eye(4)
    t_out[:3, 3] = -center
    return t_in @ rot @ t_out


def rotate_volume(v: Volume, axis: int, angle_deg: float,
                  mode: str = "trilinear") -> Volume:
    """Rigidly rotate grid content about the grid center; geometry unchanged."""
    m = rotation_about_center(v.dims, axis, angle_deg)
    data = kernels.sample_grid(v.data, m, v.dims, mode)
    return v.with_data(data)
