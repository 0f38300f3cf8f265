# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled volumetric kernels: grid resampling and component labeling.

Must stay semantically identical to ``_kernels_py.py``; the suite
cross-checks the two backends.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def sample_grid(src, matrix, out_dims, mode):
    cdef cnp.ndarray[cnp.float32_t, ndim=3, mode="c"] s = \
        np.ascontiguousarray(src, dtype=np.float32)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] m = \
        np.ascontiguousarray(matrix, dtype=np.float64)
    cdef Py_ssize_t ox = out_dims[0], oy = out_dims[1], oz = out_dims[2]
    cdef cnp.ndarray[cnp.float32_t, ndim=3, mode="c"] out = \
        np.empty((ox, oy, oz), dtype=np.float32)
    cdef bint nearest
    if mode == "nearest":
        nearest = True
    elif mode == "trilinear":
        nearest = False
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    cdef bint projective = not (m[3, 0] == 0.0 and m[3, 1] == 0.0 and
                                m[3, 2] == 0.0 and m[3, 3] == 1.0)
    cdef Py_ssize_t nx = s.shape[0], ny = s.shape[1], nz = s.shape[2]
    cdef Py_ssize_t i, j, k, x0, y0, z0, x1, y1, z1
    cdef double xs, ys, zs, w, fx, fy, fz
    cdef double bx, by, bz, bw, cx, cy, cz, cw
    cdef double c00, c01, c10, c11, c0, c1
    cdef double xmax = nx - 1.0, ymax = ny - 1.0, zmax = nz - 1.0

    with nogil:
        for i in range(ox):
            for j in range(oy):
                bx = m[0, 0] * i + m[0, 1] * j + m[0, 3]
                by = m[1, 0] * i + m[1, 1] * j + m[1, 3]
                bz = m[2, 0] * i + m[2, 1] * j + m[2, 3]
                bw = m[3, 0] * i + m[3, 1] * j + m[3, 3]
                for k in range(oz):
                    xs = bx + m[0, 2] * k
                    ys = by + m[1, 2] * k
                    zs = bz + m[2, 2] * k
                    if projective:
                        w = bw + m[3, 2] * k
                        xs /= w
                        ys /= w
                        zs /= w
                    if xs < 0: xs = 0
                    elif xs > xmax: xs = xmax
                    if ys < 0: ys = 0
                    elif ys > ymax: ys = ymax
                    if zs < 0: zs = 0
                    elif zs > zmax: zs = zmax
                    if nearest:
                        x0 = <Py_ssize_t>(xs + 0.5)
                        y0 = <Py_ssize_t>(ys + 0.5)
                        z0 = <Py_ssize_t>(zs + 0.5)
                        # round-half-to-even like np.rint at .5 boundaries
                        if xs - floor(xs) == 0.5 and (x0 & 1): x0 -= 1
                        if ys - floor(ys) == 0.5 and (y0 & 1): y0 -= 1
                        if zs - floor(zs) == 0.5 and (z0 & 1): z0 -= 1
                        if x0 > nx - 1: x0 = nx - 1
                        if y0 > ny - 1: y0 = ny - 1
                        if z0 > nz - 1: z0 = nz - 1
                        out[i, j, k] = s[x0, y0, z0]
                        continue
                    x0 = <Py_ssize_t>floor(xs)
                    y0 = <Py_ssize_t>floor(ys)
                    z0 = <Py_ssize_t>floor(zs)
                    if x0 > nx - 2: x0 = nx - 2
                    if y0 > ny - 2: y0 = ny - 2
                    if z0 > nz - 2: z0 = nz - 2
                    if x0 < 0: x0 = 0
                    if y0 < 0: y0 = 0
                    if z0 < 0: z0 = 0
                    fx = xs - x0
                    fy = ys - y0
                    fz = zs - z0
                    x1 = x0 + 1 if x0 + 1 < nx else nx - 1
                    y1 = y0 + 1 if y0 + 1 < ny else ny - 1
                    z1 = z0 + 1 if z0 + 1 < nz else nz - 1
                    c00 = s[x0, y0, z0] * (1 - fx) + s[x1, y0, z0] * fx
                    c01 = s[x0, y0, z1] * (1 - fx) + s[x1, y0, z1] * fx
                    c10 = s[x0, y1, z0] * (1 - fx) + s[x1, y1, z0] * fx
                    c11 = s[x0, y1, z1] * (1 - fx) + s[x1, y1, z1] * fx
                    c0 = c00 * (1 - fy) + c10 * fy
                    c1 = c01 * (1 - fy) + c11 * fy
                    out[i, j, k] = <float>(c0 * (1 - fz) + c1 * fz)
    return out


cdef Py_ssize_t _find(cnp.int32_t* parent, Py_ssize_t x) nogil:
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


cdef void _union(cnp.int32_t* parent, Py_ssize_t a, Py_ssize_t b) nogil:
    cdef Py_ssize_t ra = _find(parent, a)
    cdef Py_ssize_t rb = _find(parent, b)
    if ra < rb:
        parent[rb] = ra
    elif rb < ra:
        parent[ra] = rb


def label_components(mask, int connectivity):
    """Two-pass union-find labeling; labels in first-encounter raster order."""
    if connectivity not in (6, 26):
        raise ValueError("connectivity must be 6 or 26")
    cdef cnp.ndarray[cnp.uint8_t, ndim=3, mode="c"] m = \
        np.ascontiguousarray(np.asarray(mask) != 0, dtype=np.uint8)
    cdef Py_ssize_t nx = m.shape[0], ny = m.shape[1], nz = m.shape[2]
    cdef cnp.ndarray[cnp.int32_t, ndim=3, mode="c"] prov = \
        np.zeros((nx, ny, nz), dtype=np.int32)
    # previous neighbors in raster order (x outer, z fastest)
    cdef int n_off
    cdef int offs[13][3]
    cdef int t = 0
    cdef int dx, dy, dz
    if connectivity == 6:
        offs[0][0] = -1; offs[0][1] = 0;  offs[0][2] = 0
        offs[1][0] = 0;  offs[1][1] = -1; offs[1][2] = 0
        offs[2][0] = 0;  offs[2][1] = 0;  offs[2][2] = -1
        n_off = 3
    else:
        for dx in range(-1, 1):
            for dy in range(-1, 2):
                for dz in range(-1, 2):
                    if dx < 0 or (dx == 0 and (dy < 0 or (dy == 0 and dz < 0))):
                        offs[t][0] = dx; offs[t][1] = dy; offs[t][2] = dz
                        t += 1
        n_off = t

    cdef cnp.ndarray[cnp.int32_t, ndim=1, mode="c"] parent_arr = \
        np.zeros(int(m.sum()) + 1, dtype=np.int32)
    cdef cnp.int32_t* parent = <cnp.int32_t*>parent_arr.data
    cdef Py_ssize_t i, j, k, o, xi, yj, zk
    cdef cnp.int32_t next_label = 0, lbl, nb

    with nogil:
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    if m[i, j, k] == 0:
                        continue
                    lbl = 0
                    for o in range(n_off):
                        xi = i + offs[o][0]
                        yj = j + offs[o][1]
                        zk = k + offs[o][2]
                        if xi < 0 or yj < 0 or zk < 0 or yj >= ny or zk >= nz:
                            continue
                        nb = prov[xi, yj, zk]
                        if nb == 0:
                            continue
                        if lbl == 0:
                            lbl = nb
                        else:
                            _union(parent, lbl, nb)
                            lbl = nb if nb < lbl else lbl
                    if lbl == 0:
                        next_label += 1
                        parent[next_label] = next_label
                        lbl = next_label
                    prov[i, j, k] = lbl

    # compress + relabel compactly in first-encounter order
    cdef cnp.ndarray[cnp.int32_t, ndim=1, mode="c"] final_arr = \
        np.zeros(next_label + 1, dtype=np.int32)
    cdef cnp.int32_t* final = <cnp.int32_t*>final_arr.data
    cdef cnp.int32_t count = 0
    cdef Py_ssize_t root
    with nogil:
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    lbl = prov[i, j, k]
                    if lbl == 0:
                        continue
                    root = _find(parent, lbl)
                    if final[root] == 0:
                        count += 1
                        final[root] = count
                    prov[i, j, k] = final[root]
    return prov, int(count)
