"""Core volume containers: a 3D scalar grid with geometry, and voxel boxes.

A :class:`Volume` couples the voxel array (indexed ``[x, y, z]``) with its
voxel spacing and a 4x4 voxel-index -> world-mm affine.  Volumes are
immutable; every operation returns a new instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BoxOutOfRange

DTYPE_TAGS = ("u8", "i16", "f32")


@dataclass(frozen=True)
class Volume:
    data: np.ndarray                 # float32, shape (nx, ny, nz)
    affine: np.ndarray               # float64, 4x4
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    dtype_tag: str = "f32"           # storage dtype of the source/sink file

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise ValueError(f"volume data must be 3D, got shape {data.shape}")
        affine = np.asarray(self.affine, dtype=np.float64)
        if affine.shape != (4, 4):
            raise ValueError("affine must be 4x4")
        if any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        if abs(np.linalg.det(affine[:3, :3])) < 1e-12:
            raise ValueError("affine upper-left 3x3 is not invertible")
        if self.dtype_tag not in DTYPE_TAGS:
            raise ValueError(f"unknown dtype_tag {self.dtype_tag!r}")
        data = data.copy() if data.flags.writeable else data
        data.flags.writeable = False
        affine = affine.copy()
        affine.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "affine", affine)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def with_data(self, data: np.ndarray) -> "Volume":
        """Same grid geometry, new voxel values (shape must match)."""
        if tuple(np.shape(data)) != self.dims:
            raise ValueError(f"shape {np.shape(data)} != volume dims {self.dims}")
        return Volume(np.asarray(data, dtype=np.float32), self.affine,
                      self.spacing, self.dtype_tag)

    def index_to_world(self, idx: np.ndarray) -> np.ndarray:
        """Map (N, 3) voxel indices to world mm coordinates."""
        idx = np.atleast_2d(np.asarray(idx, dtype=np.float64))
        pts = np.concatenate([idx, np.ones((idx.shape[0], 1))], axis=1)
        return (self.affine @ pts.T).T[:, :3]


@dataclass(frozen=True)
class BoundingBox:
    lo: tuple[int, int, int]   # inclusive
    hi: tuple[int, int, int]   # exclusive

    def __post_init__(self):
        lo = tuple(int(v) for v in self.lo)
        hi = tuple(int(v) for v in self.hi)
        for a in range(3):
            if not lo[a] < hi[a]:
                raise ValueError(f"empty box on axis {a}: [{lo[a]}, {hi[a]})")
            if lo[a] < 0:
                raise ValueError(f"negative lower bound on axis {a}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.hi[a] - self.lo[a] for a in range(3))

    def slices(self) -> tuple[slice, slice, slice]:
        return tuple(slice(self.lo[a], self.hi[a]) for a in range(3))

    def check_within(self, dims: tuple[int, int, int]) -> None:
        for a in range(3):
            if self.hi[a] > dims[a]:
                raise BoxOutOfRange(f"box {self.lo}..{self.hi} exceeds dims {dims}")


def crop(v: Volume, box: BoundingBox) -> Volume:
    """Extract the box; the affine is translated so world coordinates hold."""
    box.check_within(v.dims)
    data = v.data[box.slices()]
    affine = np.array(v.affine)
    affine[:3, 3] = v.affine[:3, :3] @ np.asarray(box.lo, dtype=np.float64) + v.affine[:3, 3]
    return Volume(data, affine, v.spacing, v.dtype_tag)


def embed(mask: Volume, box: BoundingBox, full_dims: tuple[int, int, int],
          affine: np.ndarray | None = None) -> Volume:
    """Place `mask` into a zero volume of `full_dims` at `box` (inverse of crop).

    `affine` is the full grid's affine; when omitted it is reconstructed by
    translating the mask's affine back by the box offset.
    """
    box.check_within(full_dims)
    if mask.dims != box.shape:
        raise BoxOutOfRange(f"mask dims {mask.dims} != box shape {box.shape}")
    out = np.zeros(full_dims, dtype=np.float32)
    out[box.slices()] = mask.data
    if affine is None:
        affine = np.array(mask.affine)
        affine[:3, 3] = mask.affine[:3, 3] - mask.affine[:3, :3] @ np.asarray(box.lo, dtype=np.float64)
    return Volume(out, affine, mask.spacing, mask.dtype_tag)
