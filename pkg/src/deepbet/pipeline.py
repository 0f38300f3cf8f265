"""Two-stage prediction: coarse localization, cropped refinement, and the
multi-slice / multi-view aggregation used by the 2D path.

Stage 1 predicts a preliminary mask on a low-resolution grid; its bounding
box (plus a fractional margin) crops the volume for the high-resolution
stage-2 prediction.  The 2D path predicts per-view slice stacks, aggregates
each stack over 5 neighboring slices, and medians the three views, a
3 views x 5 slices ensemble per voxel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import NoForeground, ShapeMismatch
from .network import NetworkWeights, to_module
from .orientation import canonicalize_orientation, ras_map
from .postprocess import cleanup
from .preprocess import PreprocessConfig, preprocess
from .resample import resample
from .volume import BoundingBox, Volume, crop, embed

VIEW_AXES = {"sagittal": 0, "coronal": 1, "axial": 2}


@dataclass(frozen=True)
class PipelineConfig:
    stage1_size: int = 128
    stage2_size: int = 256
    margin_fraction: float = 0.10
    binarize_threshold: float = 0.5
    multi_slice_n: int = 5
    views: tuple[str, ...] = ("sagittal", "coronal", "axial")
    mode: str = "3d"

    def __post_init__(self):
        if self.stage1_size % 32 or self.stage2_size % 32:
            raise ValueError("stage sizes must be divisible by 32")
        if self.margin_fraction < 0:
            raise ValueError("margin_fraction must be >= 0")
        if self.multi_slice_n % 2 == 0 or self.multi_slice_n < 1:
            raise ValueError("multi_slice_n must be odd")
        if not 0.0 < self.binarize_threshold < 1.0:
            raise ValueError("binarize_threshold must lie in (0, 1)")
        if self.mode not in ("3d", "2d"):
            raise ValueError("mode must be '3d' or '2d'")
        bad = [v for v in self.views if v not in VIEW_AXES]
        if bad or not self.views:
            raise ValueError(f"views must be a non-empty subset of {sorted(VIEW_AXES)}")


@dataclass(frozen=True)
class ExtractResult:
    mask: Volume              # binary, on the input's native grid
    masked: Volume            # input intensities zeroed outside the mask
    probability: Volume       # stage-2 probability, canonical native grid
    box: BoundingBox          # stage-2 crop region (canonical grid)


def _forward_3d(weights: NetworkWeights, data: np.ndarray,
                module=None) -> np.ndarray:
    m = module if module is not None else to_module(weights)
    m.eval()
    with torch.inference_mode():
        t = torch.from_numpy(np.ascontiguousarray(data))[None, None]
        return torch.sigmoid(m(t))[0, 0].numpy()


def predict_stage1(v: Volume, weights: NetworkWeights, cfg: PipelineConfig,
                   module=None) -> Volume:
    """Coarse probability mask on the stage-1 grid (input must be preprocessed)."""
    low = resample(v, (cfg.stage1_size,) * 3)
    prob = _forward_3d(weights, low.data, module)
    return low.with_data(prob)


def minimal_bbox(mask: np.ndarray | Volume, threshold: float = 0.5) -> BoundingBox:
    """Tightest box containing every voxel with value >= threshold."""
    data = mask.data if isinstance(mask, Volume) else np.asarray(mask)
    hits = np.argwhere(data >= threshold)
    if hits.size == 0:
        raise NoForeground(f"no voxel reaches threshold {threshold}")
    lo = hits.min(axis=0)
    hi = hits.max(axis=0) + 1
    return BoundingBox(tuple(int(a) for a in lo), tuple(int(a) for a in hi))


def expand_bbox(b: BoundingBox, margin_fraction: float, dims) -> BoundingBox:
    """Extend each axis by round(margin * edge) both ways, clamped to the grid."""
    lo, hi = [], []
    for a in range(3):
        edge = b.hi[a] - b.lo[a]
        m = int(np.floor(margin_fraction * edge + 0.5))   # round half up
        lo.append(max(0, b.lo[a] - m))
        hi.append(min(int(dims[a]), b.hi[a] + m))
    return BoundingBox(tuple(lo), tuple(hi))


def scale_box(b: BoundingBox, from_dims, to_dims) -> BoundingBox:
    """Map a box between grids covering the same extent (conservative rounding)."""
    lo, hi = [], []
    for a in range(3):
        s = to_dims[a] / from_dims[a]
        lo.append(max(0, int(np.floor(b.lo[a] * s))))
        hi.append(min(int(to_dims[a]), int(np.ceil(b.hi[a] * s))))
    return BoundingBox(tuple(lo), tuple(hi))


def predict_stage2_3d(v: Volume, box: BoundingBox, weights: NetworkWeights,
                      cfg: PipelineConfig, module=None) -> Volume:
    """Refined probability mask embedded back onto v's grid (zeros outside box)."""
    c = crop(v, box)
    high = resample(c, (cfg.stage2_size,) * 3)
    prob = _forward_3d(weights, high.data, module)
    back = resample(high.with_data(prob), box.shape)
    return embed(back, box, v.dims, affine=v.affine)


def predict_slices_2d(v_cropped: Volume | np.ndarray, weights: NetworkWeights,
                      view: str, batch: int = 16, module=None) -> np.ndarray:
    """Per-slice probabilities along a view axis; 5 neighboring slices in,
    center slice out, edge slices replicated."""
    if view not in VIEW_AXES:
        raise ValueError(f"unknown view {view!r}")
    data = v_cropped.data if isinstance(v_cropped, Volume) else np.asarray(v_cropped)
    half = weights.config.in_channels // 2
    axis = VIEW_AXES[view]
    s = np.moveaxis(data, axis, 0)
    n = s.shape[0]
    nbrs = np.clip(np.arange(n)[:, None] + np.arange(-half, half + 1)[None, :], 0, n - 1)
    m = module if module is not None else to_module(weights)
    m.eval()
    out = np.empty_like(s, dtype=np.float32)
    with torch.inference_mode():
        for start in range(0, n, batch):
            chunk = np.ascontiguousarray(s[nbrs[start:start + batch]])
            probs = torch.sigmoid(m(torch.from_numpy(chunk)))
            out[start:start + batch] = probs[:, 0].numpy()
    return np.moveaxis(out, 0, axis)


def multi_slice_aggregate(stack: np.ndarray, n: int = 5, axis: int = 0) -> np.ndarray:
    """Sliding voxelwise median over `n` slices; the window clamps at the
    edges and even-sized windows take the lower median."""
    if n == 1:
        return stack
    half = n // 2
    s = np.moveaxis(np.asarray(stack), axis, 0)
    length = s.shape[0]
    out = np.empty_like(s)
    for i in range(length):
        lo, hi = max(0, i - half), min(length, i + half + 1)
        window = np.sort(s[lo:hi], axis=0)
        out[i] = window[(hi - lo - 1) // 2]
    return np.moveaxis(out, 0, axis)


def multi_view_aggregate(sag: np.ndarray, cor: np.ndarray, ax: np.ndarray) -> np.ndarray:
    if not (sag.shape == cor.shape == ax.shape):
        raise ShapeMismatch(f"view shapes differ: {sag.shape}, {cor.shape}, {ax.shape}")
    return np.median(np.stack([sag, cor, ax]), axis=0)


def _aggregate_views(stacks: dict[str, np.ndarray], cfg: PipelineConfig) -> np.ndarray:
    agg = {view: multi_slice_aggregate(stack, cfg.multi_slice_n, VIEW_AXES[view])
           for view, stack in stacks.items()}
    if len(agg) == 3:
        return multi_view_aggregate(agg["sagittal"], agg["coronal"], agg["axial"])
    if len(agg) == 1:
        return next(iter(agg.values()))
    arrs = [agg[v] for v in sorted(agg)]
    return np.sort(np.stack(arrs), axis=0)[(len(arrs) - 1) // 2]


def predict_stage2_2d(v: Volume, box: BoundingBox, bundle: dict[str, NetworkWeights],
                      cfg: PipelineConfig, modules: dict | None = None) -> Volume:
    """2D path: per-view slice predictions, multi-slice + multi-view median."""
    modules = modules or {}
    c = crop(v, box)
    high = resample(c, (cfg.stage2_size,) * 3)
    stacks = {view: predict_slices_2d(high, bundle[f"view_{view}"], view,
                                      module=modules.get(f"view_{view}"))
              for view in cfg.views}
    prob = _aggregate_views(stacks, cfg)
    back = resample(high.with_data(prob), box.shape)
    return embed(back, box, v.dims, affine=v.affine)


def _restore_orientation(data: np.ndarray, original: Volume) -> Volume:
    axmap = ras_map(original)
    return Volume(np.ascontiguousarray(axmap.undo(data)), original.affine,
                  original.spacing, original.dtype_tag)


def extract(v: Volume, bundle: dict[str, NetworkWeights], cfg: PipelineConfig,
            pre_cfg: PreprocessConfig | None = None, single_stage: bool = False,
            modules: dict | None = None) -> ExtractResult:
    """Full chain: preprocess, stage 1, crop, stage 2, binarize, cleanup.

    `single_stage=True` skips the refinement and upsamples the stage-1
    probability to the native grid instead.
    """
    modules = modules or {}
    canon = canonicalize_orientation(v)
    pre = preprocess(canon, pre_cfg or PreprocessConfig())
    prob1 = predict_stage1(pre, bundle["stage1"], cfg, module=modules.get("stage1"))
    box_low = minimal_bbox(prob1, cfg.binarize_threshold)
    box = expand_bbox(scale_box(box_low, prob1.dims, pre.dims),
                      cfg.margin_fraction, pre.dims)
    if single_stage:
        prob_native = resample(prob1, pre.dims)
    elif cfg.mode == "2d":
        prob_native = predict_stage2_2d(pre, box, bundle, cfg, modules)
    else:
        prob_native = predict_stage2_3d(pre, box, bundle["stage2"], cfg,
                                        module=modules.get("stage2"))
    binary = (prob_native.data >= cfg.binarize_threshold).astype(np.uint8)
    cleaned = cleanup(binary).astype(np.float32)
    mask = _restore_orientation(cleaned, v)
    masked = v.with_data(v.data * mask.data)
    return ExtractResult(mask=Volume(mask.data, v.affine, v.spacing, "u8"),
                         masked=masked, probability=prob_native, box=box)


class Predictor:
    """Reusable extractor: builds each model's torch module once."""

    def __init__(self, bundle: dict[str, NetworkWeights], cfg: PipelineConfig,
                 pre_cfg: PreprocessConfig | None = None):
        self.bundle = bundle
        self.cfg = cfg
        self.pre_cfg = pre_cfg or PreprocessConfig()
        self.modules = {name: to_module(w).eval() for name, w in bundle.items()}

    def extract(self, v: Volume, single_stage: bool = False) -> ExtractResult:
        return extract(v, self.bundle, self.cfg, self.pre_cfg,
                       single_stage=single_stage, modules=self.modules)
