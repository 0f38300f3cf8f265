"""Reorient volumes so voxel axes line up with Right-Anterior-Superior.

The sagittal/coronal/axial views used elsewhere are only well defined once
every volume sits in this canonical orientation.  Reorientation is a pure
permutation/flip of the voxel grid; world coordinates never change.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateAffine
from .volume import Volume


@dataclass(frozen=True)
class AxisMap:
    """Flip-then-transpose recipe mapping a grid into RAS order."""
    order: tuple[int, int, int]    # source axes listed in output order
    flips: tuple[bool, bool, bool]  # per source axis, applied before transpose

    @property
    def is_identity(self) -> bool:
        return self.order == (0, 1, 2) and not any(self.flips)

    def apply(self, arr: np.ndarray) -> np.ndarray:
        for a in range(3):
            if self.flips[a]:
                arr = np.flip(arr, axis=a)
        return np.transpose(arr, self.order)

    def undo(self, arr: np.ndarray) -> np.ndarray:
        arr = np.transpose(arr, np.argsort(self.order))
        for a in range(3):
            if self.flips[a]:
                arr = np.flip(arr, axis=a)
        return arr


def _dominant_axes(affine: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """World axis and sign most aligned with each voxel axis."""
    mat = np.asarray(affine, dtype=np.float64)[:3, :3]
    if abs(np.linalg.det(mat)) < 1e-12:
        raise DegenerateAffine("affine upper-left 3x3 is singular")
    world = np.argmax(np.abs(mat), axis=0)
    if sorted(world.tolist()) != [0, 1, 2]:
        raise DegenerateAffine(f"no axis permutation: voxel axes map to world axes {world}")
    signs = np.sign(mat[world, np.arange(3)])
    if np.any(signs == 0):
        raise DegenerateAffine("zero-length direction column")
    return world, signs


def ras_map(v: Volume) -> AxisMap:
    world, signs = _dominant_axes(v.affine)
    flips = tuple(bool(s < 0) for s in signs)
    order = tuple(int(np.argwhere(world == w)[0, 0]) for w in range(3))
    return AxisMap(order=order, flips=flips)


def canonicalize_orientation(v: Volume) -> Volume:
    """Permute/flip axes to RAS; the affine is updated so world positions hold."""
    m = ras_map(v)
    if m.is_identity:
        return v
    affine = np.array(v.affine)
    for a in range(3):
        if m.flips[a]:
            affine[:3, 3] += affine[:3, a] * (v.dims[a] - 1)
            affine[:3, a] = -affine[:3, a]
    affine[:3, :3] = affine[:3, :3][:, m.order]
    data = m.apply(v.data)
    spacing = tuple(v.spacing[a] for a in m.order)
    return Volume(np.ascontiguousarray(data), affine, spacing, v.dtype_tag)
