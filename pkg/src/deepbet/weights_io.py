"""DBW1 weights file: a flat named-tensor table plus a metadata text block.

Layout (little-endian): magic "DBW1"; u32 tensor count; per tensor
u16 name length, name bytes, u8 dtype code (0 = float32), u8 ndim,
u32 dims[ndim], raw values; then a u32-length-prefixed UTF-8 key/value
block (one ``key=value`` per line).

A file may hold several models at once; tensor names are prefixed
``<model>/`` and each model's config lives in the metadata block.
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .errors import CorruptHeader, IoFailure
from .network import NetworkConfig, NetworkWeights

MAGIC = b"DBW1"
_DTYPE_F32 = 0


def _pack_tensors(tensors: "OrderedDict[str, np.ndarray]") -> bytes:
    parts = [MAGIC, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f4")
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<BB", _DTYPE_F32, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


def _pack_metadata(meta: dict[str, str]) -> bytes:
    text = "".join(f"{k}={v}\n" for k, v in meta.items()).encode("utf-8")
    return struct.pack("<I", len(text)) + text


def _unpack(blob: bytes, path) -> tuple["OrderedDict[str, np.ndarray]", dict[str, str]]:
    if blob[:4] != MAGIC:
        raise CorruptHeader(f"{path}: bad magic {blob[:4]!r}")
    off = 4
    (count,) = struct.unpack_from("<I", blob, off)
    off += 4
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off:off + nlen].decode("utf-8")
        off += nlen
        code, ndim = struct.unpack_from("<BB", blob, off)
        off += 2
        if code != _DTYPE_F32:
            raise CorruptHeader(f"{path}: unknown dtype code {code}")
        dims = struct.unpack_from(f"<{ndim}I", blob, off)
        off += 4 * ndim
        n = int(np.prod(dims)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape(dims)
        tensors[name] = arr.copy()
        off += 4 * n
    meta: dict[str, str] = {}
    if off < len(blob):
        (tlen,) = struct.unpack_from("<I", blob, off)
        off += 4
        text = blob[off:off + tlen].decode("utf-8")
        for line in text.splitlines():
            if line:
                k, _, v = line.partition("=")
                meta[k] = v
    return tensors, meta


def _config_meta(prefix: str, cfg: NetworkConfig) -> dict[str, str]:
    return {
        f"{prefix}.rank": str(cfg.rank),
        f"{prefix}.in_channels": str(cfg.in_channels),
        f"{prefix}.base_channels": str(cfg.base_channels),
        f"{prefix}.encoder_depth": str(cfg.encoder_depth),
        f"{prefix}.norm": cfg.norm,
        f"{prefix}.out_channels": str(cfg.out_channels),
    }


def _config_from_meta(prefix: str, meta: dict[str, str]) -> NetworkConfig:
    try:
        return NetworkConfig(
            rank=int(meta[f"{prefix}.rank"]),
            in_channels=int(meta[f"{prefix}.in_channels"]),
            base_channels=int(meta[f"{prefix}.base_channels"]),
            encoder_depth=int(meta[f"{prefix}.encoder_depth"]),
            norm=meta[f"{prefix}.norm"],
            out_channels=int(meta[f"{prefix}.out_channels"]),
        )
    except KeyError as e:
        raise CorruptHeader(f"metadata block missing {e} for model {prefix!r}") from e


def save_weights(weights: NetworkWeights, path) -> None:
    save_bundle({"model": weights}, path)


def load_weights(path) -> NetworkWeights:
    bundle = load_bundle(path)
    if len(bundle) != 1:
        raise CorruptHeader(f"{path}: expected a single model, found {sorted(bundle)}")
    return next(iter(bundle.values()))


def save_bundle(bundle: dict[str, NetworkWeights], path,
                extra_meta: dict[str, str] | None = None) -> None:
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    meta: dict[str, str] = {"models": ",".join(bundle.keys())}
    for model, w in bundle.items():
        meta.update(_config_meta(model, w.config))
        for name, arr in w.tensors.items():
            tensors[f"{model}/{name}"] = arr
    if extra_meta:
        meta.update({str(k): str(v) for k, v in extra_meta.items()})
    blob = _pack_tensors(tensors) + _pack_metadata(meta)
    try:
        Path(path).write_bytes(blob)
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def read_metadata(path) -> dict[str, str]:
    """Just the key/value metadata block of a weights file."""
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    _, meta = _unpack(blob, path)
    return meta


def load_bundle(path) -> dict[str, NetworkWeights]:
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    tensors, meta = _unpack(blob, path)
    if "models" not in meta:
        raise CorruptHeader(f"{path}: metadata block lacks the model list")
    bundle: dict[str, NetworkWeights] = {}
    for model in meta["models"].split(","):
        cfg = _config_from_meta(model, meta)
        prefix = f"{model}/"
        own = OrderedDict((name[len(prefix):], arr)
                          for name, arr in tensors.items() if name.startswith(prefix))
        bundle[model] = NetworkWeights(config=cfg, tensors=own)
    return bundle
