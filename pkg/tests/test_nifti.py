import gzip
import struct

import numpy as np
import pytest

from deepbet.errors import (CorruptHeader, RangeOverflow, TruncatedData,
                            UnsupportedDtype)
from deepbet.nifti import read_nifti, write_nifti
from deepbet.volume import Volume


def build_raw_nifti(dims, payload: bytes, datatype: int, bitpix: int,
                    scl_slope: float = 0.0, scl_inter: float = 0.0,
                    magic: bytes = b"n+1\x00", sizeof_hdr: int = 348,
                    sform: np.ndarray | None = None,
                    qform: tuple | None = None,
                    pixdim=(1.0, 1.0, 1.0)) -> bytes:
    """Hand-assembled header, independent of the package writer."""
    hdr = bytearray(348)
    struct.pack_into("<i", hdr, 0, sizeof_hdr)
    struct.pack_into("<8h", hdr, 40, 3, *dims, 1, 1, 1, 1)
    struct.pack_into("<hh", hdr, 70, datatype, bitpix)
    struct.pack_into("<8f", hdr, 76, 1.0, *pixdim, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<fff", hdr, 108, 352.0, scl_slope, scl_inter)
    if sform is not None:
        struct.pack_into("<hh", hdr, 252, 0, 1)
        struct.pack_into("<12f", hdr, 280, *np.asarray(sform, dtype=np.float64)[:3, :].ravel())
    elif qform is not None:
        b, c, d, ox, oy, oz = qform
        struct.pack_into("<hh", hdr, 252, 1, 0)
        struct.pack_into("<6f", hdr, 256, b, c, d, ox, oy, oz)
    struct.pack_into("<4s", hdr, 344, magic)
    return bytes(hdr) + b"\x00\x00\x00\x00" + payload


def rand_volume(rng, dims=(5, 4, 3)):
    data = rng.normal(size=dims).astype(np.float32)
    affine = np.diag([1.0, 2.0, 0.5, 1.0])
    affine[:3, 3] = [-3.0, 4.5, 1.25]
    return Volume(data, affine, (1.0, 2.0, 0.5))


def test_minimal_int16_file(tmp_path):
    values = np.arange(8, dtype="<i2")
    raw = build_raw_nifti((2, 2, 2), values.tobytes(), datatype=4, bitpix=16)
    p = tmp_path / "min.nii"
    p.write_bytes(raw)
    v = read_nifti(p)
    assert v.dims == (2, 2, 2)
    assert np.array_equal(v.data.ravel(order="F"), values.astype(np.float32))


def test_slope_intercept_applied(tmp_path):
    values = np.full(8, 3, dtype="<i2")
    raw = build_raw_nifti((2, 2, 2), values.tobytes(), datatype=4, bitpix=16,
                          scl_slope=2.0, scl_inter=1.0)
    p = tmp_path / "scl.nii"
    p.write_bytes(raw)
    v = read_nifti(p)
    assert np.all(v.data == 7.0)   # 3 * 2 + 1, by hand


def test_write_read_roundtrip_float32_bitexact(tmp_path):
    rng = np.random.default_rng(0)
    v = rand_volume(rng)
    for name in ("a.nii", "a.nii.gz"):
        p = tmp_path / name
        write_nifti(v, p)
        back = read_nifti(p)
        assert back.dims == v.dims
        assert back.spacing == v.spacing
        assert np.array_equal(back.data, v.data)
        assert np.allclose(back.affine, v.affine, atol=1e-6)


def test_read_write_read_identity(tmp_path):
    values = np.arange(24, dtype="<i2")
    raw = build_raw_nifti((2, 3, 4), values.tobytes(), datatype=4, bitpix=16)
    p1, p2 = tmp_path / "in.nii", tmp_path / "out.nii"
    p1.write_bytes(raw)
    v = read_nifti(p1)
    write_nifti(v, p2)
    again = read_nifti(p2)
    assert np.array_equal(v.data, again.data)
    assert v.dims == again.dims


def test_uint8_quantized_probability_mask(tmp_path):
    rng = np.random.default_rng(1)
    prob = rng.random((6, 6, 6)).astype(np.float32)
    v = Volume(prob, np.eye(4))
    p = tmp_path / "mask.nii"
    write_nifti(v, p, dtype_tag="u8", slope=1.0 / 255.0)
    back = read_nifti(p)
    # quantization bound: rounding to 1/255 steps is off by at most 1/510
    assert float(np.abs(back.data - prob).max()) <= 1.0 / 510.0 + 1e-7


def test_int16_overflow(tmp_path):
    v = Volume(np.full((2, 2, 2), 70000.0, dtype=np.float32), np.eye(4))
    with pytest.raises(RangeOverflow):
        write_nifti(v, tmp_path / "o.nii", dtype_tag="i16")


def test_bad_magic_and_size(tmp_path):
    raw = build_raw_nifti((2, 2, 2), np.zeros(8, "<i2").tobytes(), 4, 16,
                          magic=b"bad\x00")
    p = tmp_path / "bad.nii"
    p.write_bytes(raw)
    with pytest.raises(CorruptHeader):
        read_nifti(p)
    raw = build_raw_nifti((2, 2, 2), np.zeros(8, "<i2").tobytes(), 4, 16,
                          sizeof_hdr=340)
    p.write_bytes(raw)
    with pytest.raises(CorruptHeader):
        read_nifti(p)


def test_unsupported_dtype(tmp_path):
    raw = build_raw_nifti((2, 2, 2), np.zeros(8, "<f8").tobytes(), 64, 64)
    p = tmp_path / "f64.nii"
    p.write_bytes(raw)
    with pytest.raises(UnsupportedDtype):
        read_nifti(p)


def test_truncated_payload(tmp_path):
    values = np.zeros(8, dtype="<i2")
    raw = build_raw_nifti((2, 2, 2), values.tobytes()[:-4], datatype=4, bitpix=16)
    p = tmp_path / "trunc.nii"
    p.write_bytes(raw)
    with pytest.raises(TruncatedData):
        read_nifti(p)


def test_sform_preferred_over_pixdim(tmp_path):
    sform = np.array([[0, -2, 0, 10], [1, 0, 0, -5], [0, 0, 3, 0], [0, 0, 0, 1.0]])
    raw = build_raw_nifti((2, 2, 2), np.zeros(8, "<i2").tobytes(), 4, 16, sform=sform)
    p = tmp_path / "s.nii"
    p.write_bytes(raw)
    v = read_nifti(p)
    assert np.allclose(v.affine, sform, atol=1e-6)


def test_qform_fallback(tmp_path):
    # identity quaternion, pure translation
    raw = build_raw_nifti((2, 2, 2), np.zeros(8, "<i2").tobytes(), 4, 16,
                          qform=(0.0, 0.0, 0.0, 1.0, 2.0, 3.0),
                          pixdim=(1.5, 2.0, 2.5))
    p = tmp_path / "q.nii"
    p.write_bytes(raw)
    v = read_nifti(p)
    expected = np.diag([1.5, 2.0, 2.5, 1.0])
    expected[:3, 3] = [1.0, 2.0, 3.0]
    assert np.allclose(v.affine, expected, atol=1e-6)


def test_no_form_uses_pixdim(tmp_path):
    raw = build_raw_nifti((2, 2, 2), np.zeros(8, "<i2").tobytes(), 4, 16,
                          pixdim=(2.0, 3.0, 4.0))
    p = tmp_path / "d.nii"
    p.write_bytes(raw)
    v = read_nifti(p)
    assert np.allclose(v.affine, np.diag([2.0, 3.0, 4.0, 1.0]))
    assert v.spacing == (2.0, 3.0, 4.0)


def test_gzip_autodetected_and_deterministic(tmp_path):
    rng = np.random.default_rng(2)
    v = rand_volume(rng)
    p1, p2 = tmp_path / "a.nii.gz", tmp_path / "b.nii.gz"
    write_nifti(v, p1)
    write_nifti(v, p2)
    assert p1.read_bytes() == p2.read_bytes()   # mtime-free gzip stream
    assert p1.read_bytes()[:2] == b"\x1f\x8b"
    assert np.array_equal(read_nifti(p1).data, v.data)


def test_header_too_short(tmp_path):
    p = tmp_path / "short.nii"
    p.write_bytes(b"\x00" * 100)
    with pytest.raises(CorruptHeader):
        read_nifti(p)
