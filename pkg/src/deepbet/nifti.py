"""Single-file NIfTI-1 reader/writer (uint8, int16, float32; optional gzip).

Covers the practical T1w universe on purpose: little-endian, 348-byte
header, magic ``n+1\\0``, data inline after the header.  The affine is taken
from the sform when valid, else the qform, else a diagonal built from the
voxel spacing.  Values are returned as float32 with slope/intercept applied.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .errors import (CorruptHeader, IoFailure, RangeOverflow, TruncatedData,
                     UnsupportedDtype)
from .volume import Volume

HEADER_SIZE = 348
MAGIC = b"n+1\x00"

# NIfTI-1 datatype codes
_CODE_TO_DTYPE = {2: np.uint8, 4: np.int16, 16: np.float32}
_TAG_TO_CODE = {"u8": 2, "i16": 4, "f32": 16}
_CODE_TO_TAG = {v: k for k, v in _TAG_TO_CODE.items()}
_BITPIX = {2: 8, 4: 16, 16: 32}


def _read_file(path) -> bytes:
    try:
        with open(path, "rb") as f:
            head = f.read(2)
            rest = f.read()
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    raw = head + rest
    if head == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except OSError as e:
            raise CorruptHeader(f"{path}: bad gzip stream: {e}") from e
    return raw


def _quaternion_affine(hdr: dict) -> np.ndarray:
    b, c, d = hdr["quatern_b"], hdr["quatern_c"], hdr["quatern_d"]
    a2 = 1.0 - (b * b + c * c + d * d)
    a = np.sqrt(a2) if a2 > 0 else 0.0
    rot = np.array([
        [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
        [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
        [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
    ])
    qfac = -1.0 if hdr["pixdim"][0] < 0 else 1.0
    scales = np.array([hdr["pixdim"][1], hdr["pixdim"][2], qfac * hdr["pixdim"][3]])
    affine = np.eye(4)
    affine[:3, :3] = rot * scales[np.newaxis, :]
    affine[:3, 3] = [hdr["qoffset_x"], hdr["qoffset_y"], hdr["qoffset_z"]]
    return affine


def _parse_header(raw: bytes, path) -> dict:
    if len(raw) < HEADER_SIZE:
        raise CorruptHeader(f"{path}: file shorter than the {HEADER_SIZE}-byte header")
    (sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
    if sizeof_hdr != HEADER_SIZE:
        raise CorruptHeader(f"{path}: sizeof_hdr={sizeof_hdr}, expected {HEADER_SIZE}")
    magic = raw[344:348]
    if magic != MAGIC:
        raise CorruptHeader(f"{path}: magic {magic!r}, expected {MAGIC!r}")
    dim = struct.unpack_from("<8h", raw, 40)
    ndim = dim[0]
    if not 3 <= ndim <= 7:
        raise CorruptHeader(f"{path}: dim[0]={ndim}, need a 3D volume")
    if any(dim[1 + k] > 1 for k in range(3, ndim)):
        raise CorruptHeader(f"{path}: non-singleton trailing dimensions {dim[4:1+ndim]}")
    dims = tuple(int(dim[k]) for k in (1, 2, 3))
    if any(n < 1 for n in dims):
        raise CorruptHeader(f"{path}: non-positive dims {dims}")
    datatype, bitpix = struct.unpack_from("<hh", raw, 70)
    if datatype not in _CODE_TO_DTYPE:
        raise UnsupportedDtype(f"{path}: datatype code {datatype} not in (2, 4, 16)")
    if bitpix != _BITPIX[datatype]:
        raise CorruptHeader(f"{path}: bitpix {bitpix} inconsistent with datatype {datatype}")
    pixdim = struct.unpack_from("<8f", raw, 76)
    vox_offset, scl_slope, scl_inter = struct.unpack_from("<fff", raw, 108)
    qform_code, sform_code = struct.unpack_from("<hh", raw, 252)
    quatern = struct.unpack_from("<6f", raw, 256)
    srow = struct.unpack_from("<12f", raw, 280)
    return {
        "dims": dims, "datatype": datatype, "pixdim": pixdim,
        "vox_offset": vox_offset, "scl_slope": scl_slope, "scl_inter": scl_inter,
        "qform_code": qform_code, "sform_code": sform_code,
        "quatern_b": quatern[0], "quatern_c": quatern[1], "quatern_d": quatern[2],
        "qoffset_x": quatern[3], "qoffset_y": quatern[4], "qoffset_z": quatern[5],
        "srow": srow,
    }


def _affine_from_header(hdr: dict) -> np.ndarray:
    if hdr["sform_code"] > 0:
        affine = np.eye(4)
        affine[0, :] = hdr["srow"][0:4]
        affine[1, :] = hdr["srow"][4:8]
        affine[2, :] = hdr["srow"][8:12]
        if abs(np.linalg.det(affine[:3, :3])) > 1e-12:
            return affine
    if hdr["qform_code"] > 0:
        affine = _quaternion_affine(hdr)
        if abs(np.linalg.det(affine[:3, :3])) > 1e-12:
            return affine
    spacing = [p if p > 0 else 1.0 for p in hdr["pixdim"][1:4]]
    return np.diag(spacing + [1.0])


def read_nifti(path) -> Volume:
    """Read a single-file .nii / .nii.gz volume."""
    raw = _read_file(path)
    hdr = _parse_header(raw, path)
    dims = hdr["dims"]
    dtype = _CODE_TO_DTYPE[hdr["datatype"]]
    itemsize = np.dtype(dtype).itemsize
    offset = int(hdr["vox_offset"])
    if offset < HEADER_SIZE:
        offset = HEADER_SIZE
    nbytes = dims[0] * dims[1] * dims[2] * itemsize
    payload = raw[offset:offset + nbytes]
    if len(payload) < nbytes:
        raise TruncatedData(f"{path}: expected {nbytes} data bytes, found {len(payload)}")
    arr = np.frombuffer(payload, dtype=np.dtype(dtype).newbyteorder("<"))
    data = arr.reshape(dims, order="F").astype(np.float32)
    slope = hdr["scl_slope"]
    inter = hdr["scl_inter"]
    if slope == 0.0 or not np.isfinite(slope):
        slope, inter = 1.0, 0.0
    if (slope, inter) != (1.0, 0.0):
        data = data * np.float32(slope) + np.float32(inter)
    affine = _affine_from_header(hdr)
    spacing = tuple(abs(p) if p != 0 else float(np.linalg.norm(affine[:3, a]))
                    for a, p in enumerate(hdr["pixdim"][1:4]))
    spacing = tuple(s if s > 0 else 1.0 for s in spacing)
    return Volume(data, affine, spacing, _CODE_TO_TAG[hdr["datatype"]])


def write_nifti(v: Volume, path, dtype_tag: str = "f32",
                slope: float = 1.0, inter: float = 0.0) -> None:
    """Write a single-file .nii / .nii.gz with the sform set from the affine.

    For integer targets the stored values are ``rint((v - inter) / slope)``;
    readers recover ``stored * slope + inter``.
    """
    if dtype_tag not in _TAG_TO_CODE:
        raise UnsupportedDtype(f"cannot write dtype_tag {dtype_tag!r}")
    code = _TAG_TO_CODE[dtype_tag]
    dtype = _CODE_TO_DTYPE[code]
    data = v.data
    if (slope, inter) != (1.0, 0.0):
        data = (data.astype(np.float64) - inter) / slope
    if code in (2, 4):
        data = np.rint(data)
        info = np.iinfo(dtype)
        lo, hi = float(data.min()), float(data.max())
        if lo < info.min or hi > info.max:
            raise RangeOverflow(
                f"values [{lo}, {hi}] do not fit {dtype_tag} range [{info.min}, {info.max}]")
    payload = np.asarray(data, dtype=np.dtype(dtype).newbyteorder("<")).tobytes(order="F")

    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<c", hdr, 38, b"r")
    struct.pack_into("<8h", hdr, 40, 3, *v.dims, 1, 1, 1, 1)
    struct.pack_into("<hh", hdr, 70, code, _BITPIX[code])
    struct.pack_into("<8f", hdr, 76, 1.0, *v.spacing, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<fff", hdr, 108, float(HEADER_SIZE + 4), slope, inter)
    struct.pack_into("<hh", hdr, 252, 0, 1)  # qform off, sform on
    struct.pack_into("<12f", hdr, 280, *np.asarray(v.affine[:3, :], dtype=np.float64).ravel())
    struct.pack_into("<4s", hdr, 344, MAGIC)

    blob = bytes(hdr) + b"\x00\x00\x00\x00" + payload
    path = Path(path)
    try:
        if path.suffix == ".gz":
            with open(path, "wb") as f:
                with gzip.GzipFile(filename="", fileobj=f, mode="wb", mtime=0) as gz:
                    gz.write(blob)
        else:
            path.write_bytes(blob)
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e
