"""Pure NumPy implementations of the hot volumetric kernels.

Used when the compiled extension is unavailable (or forced off via
``DEEPBET_PURE_PYTHON=1``).  Semantics must match ``_kernels.pyx`` exactly;
the test suite checks both backends against each other and against
brute-force oracles.
"""

from __future__ import annotations

import numpy as np

_SHIFTS_6 = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
_SHIFTS_26 = [(dx, dy, dz)
              for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)
              if (dx, dy, dz) != (0, 0, 0)]


def sample_grid(src: np.ndarray, matrix: np.ndarray, out_dims, mode: str) -> np.ndarray:
    """Resample `src` onto an `out_dims` grid.

    `matrix` is a homogeneous 4x4 mapping output voxel indices to (possibly
    projective) input voxel coordinates.  Out-of-range coordinates clamp to
    the border (replication).  `mode` is "trilinear" or "nearest".
    """
    src = np.asarray(src, dtype=np.float32)
    m = np.asarray(matrix, dtype=np.float64)
    nx, ny, nz = src.shape
    ox, oy, oz = (int(d) for d in out_dims)
    i = np.arange(ox, dtype=np.float64)[:, None, None]
    j = np.arange(oy, dtype=np.float64)[None, :, None]
    k = np.arange(oz, dtype=np.float64)[None, None, :]

    def row(r):
        return m[r, 0] * i + m[r, 1] * j + m[r, 2] * k + m[r, 3]

    xs, ys, zs = row(0), row(1), row(2)
    if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0]):
        w = row(3)
        xs, ys, zs = xs / w, ys / w, zs / w

    xs = np.clip(xs, 0.0, nx - 1.0)
    ys = np.clip(ys, 0.0, ny - 1.0)
    zs = np.clip(zs, 0.0, nz - 1.0)

    if mode == "nearest":
        xi = np.rint(xs).astype(np.intp)
        yi = np.rint(ys).astype(np.intp)
        zi = np.rint(zs).astype(np.intp)
        out = src[xi, yi, zi]
        return np.ascontiguousarray(np.broadcast_to(out, (ox, oy, oz)), dtype=np.float32)
    if mode != "trilinear":
        raise ValueError(f"unknown sampling mode {mode!r}")

    x0 = np.clip(np.floor(xs).astype(np.intp), 0, max(nx - 2, 0))
    y0 = np.clip(np.floor(ys).astype(np.intp), 0, max(ny - 2, 0))
    z0 = np.clip(np.floor(zs).astype(np.intp), 0, max(nz - 2, 0))
    fx = (xs - x0).astype(np.float32)
    fy = (ys - y0).astype(np.float32)
    fz = (zs - z0).astype(np.float32)
    x1 = np.minimum(x0 + 1, nx - 1)
    y1 = np.minimum(y0 + 1, ny - 1)
    z1 = np.minimum(z0 + 1, nz - 1)

    c00 = src[x0, y0, z0] * (1 - fx) + src[x1, y0, z0] * fx
    c01 = src[x0, y0, z1] * (1 - fx) + src[x1, y0, z1] * fx
    c10 = src[x0, y1, z0] * (1 - fx) + src[x1, y1, z0] * fx
    c11 = src[x0, y1, z1] * (1 - fx) + src[x1, y1, z1] * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    out = c0 * (1 - fz) + c1 * fz
    return np.ascontiguousarray(np.broadcast_to(out, (ox, oy, oz)), dtype=np.float32)


def label_components(mask: np.ndarray, connectivity: int) -> tuple[np.ndarray, int]:
    """Label foreground components; labels follow first-encounter raster order.

    Returns (labels int32 with 0 = background, component count).
    """
    if connectivity not in (6, 26):
        raise ValueError("connectivity must be 6 or 26")
    shifts = _SHIFTS_6 if connectivity == 6 else _SHIFTS_26
    mask = np.asarray(mask, dtype=bool)
    labels = np.zeros(mask.shape, dtype=np.int32)
    remaining = mask.copy()
    count = 0
    flat = remaining.reshape(-1)
    while True:
        seeds = np.flatnonzero(flat)
        if seeds.size == 0:
            break
        count += 1
        comp = np.zeros(mask.shape, dtype=bool)
        comp.reshape(-1)[seeds[0]] = True
        frontier = comp.copy()
        while frontier.any():
            grown = _dilate(frontier, shifts)
            frontier = grown & remaining & ~comp
            comp |= frontier
        labels[comp] = count
        remaining &= ~comp
    return labels, count


def _dilate(a: np.ndarray, shifts) -> np.ndarray:
    out = a.copy()
    for dx, dy, dz in shifts:
        out |= _shift(a, dx, dy, dz)
    return out


def _shift(a: np.ndarray, dx: int, dy: int, dz: int) -> np.ndarray:
    out = np.zeros_like(a)
    src = [slice(None)] * 3
    dst = [slice(None)] * 3
    for axis, d in enumerate((dx, dy, dz)):
        if d > 0:
            src[axis] = slice(0, a.shape[axis] - d)
            dst[axis] = slice(d, a.shape[axis])
        elif d < 0:
            src[axis] = slice(-d, a.shape[axis])
            dst[axis] = slice(0, a.shape[axis] + d)
    out[tuple(dst)] = a[tuple(src)]
    return out
