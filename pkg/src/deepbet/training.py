"""Training loop: sample sources, per-group learning rates, loss logging.

One generic loop covers both network ranks; what differs is the sample
source (full low-res volumes for stage 1, cropped high-res volumes for
stage 2, slice batches for the 2D view models).  Runs are deterministic
given the seed; the deterministic profile pins torch to one thread.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .augment import AugmentConfig, augment_pair, slice_merge
from .losses import generalized_dice_focal_loss
from .network import LinkNet, NetworkConfig, NetworkWeights, to_module, weights_from_module
from .optim import RAdamLookahead, lr_at
from .pipeline import VIEW_AXES, expand_bbox, minimal_bbox, scale_box
from .resample import resample
from .volume import Volume, crop

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    lambda_focal: float = 0.2
    focal_gamma: float = 2.0
    batch_size: int = 1
    epochs: int = 10
    lookahead_k: int = 6
    lookahead_alpha: float = 0.5
    flat_fraction: float = 0.75
    lr_multipliers: tuple[float, float, float] = (1.0, 1.0, 1.0)  # encoder, decoder, head
    grad_clip: float = 1.0
    seed: int = 0
    deterministic: bool = False
    slices_per_sample: int = 32        # 2D only: slices drawn per volume per epoch
    patch_size: int | None = None      # 3D stage 2: train on random patches this size

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.lambda_focal < 0:
            raise ValueError("lambda_focal must be >= 0")
        if not 0 < self.flat_fraction < 1:
            raise ValueError("flat_fraction must lie in (0, 1)")
        if any(m < 0 for m in self.lr_multipliers):
            raise ValueError("lr multipliers must be >= 0")


@dataclass
class LossLogEntry:
    step: int
    epoch: int
    lr: float
    loss: float


def write_loss_log(entries: list[LossLogEntry], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "epoch", "lr", "loss"])
        for e in entries:
            w.writerow([e.step, e.epoch, f"{e.lr:.10g}", f"{e.loss:.10g}"])


# --- sample sources ------------------------------------------------------

class VolumeSource:
    """Full volumes resampled to a fixed grid, with optional augmentation."""

    def __init__(self, pairs: list[tuple[np.ndarray, np.ndarray]], size: int,
                 augment_cfg: AugmentConfig | None):
        self.size = size
        self.augment_cfg = augment_cfg
        self._cache = []
        for img, mask in pairs:
            target = (size, size, size)
            iv = Volume(img, np.eye(4))
            mv = Volume(mask, np.eye(4))
            self._cache.append((resample(iv, target).data, resample(mv, target).data))

    def __len__(self):
        return len(self._cache)

    def get(self, idx: int, rng: np.random.Generator):
        img, mask = self._cache[idx]
        if self.augment_cfg is not None:
            img, mask = augment_pair(img, mask, rng, self.augment_cfg)
        x = torch.from_numpy(np.ascontiguousarray(img))[None, None]
        t = torch.from_numpy(np.ascontiguousarray(np.clip(mask, 0.0, 1.0)))[None, None]
        return x, t


class CropSource:
    """Mask-guided crops resampled to the stage-2 grid, built on the fly.

    The crop margin is jittered around the configured fraction so the net
    tolerates variation in the stage-1 bounding box.  With `patch_size`
    set, training draws random patches from the stage-2 grid instead of
    whole volumes: same voxel scale as inference at a fraction of the cost.
    """

    def __init__(self, pairs: list[tuple[np.ndarray, np.ndarray]], size: int,
                 margin_fraction: float, augment_cfg: AugmentConfig | None,
                 patch_size: int | None = None):
        self.pairs = pairs
        self.size = size
        self.margin = margin_fraction
        self.augment_cfg = augment_cfg
        self.patch_size = patch_size

    def __len__(self):
        return len(self.pairs)

    def _crop_pair(self, idx: int, rng: np.random.Generator):
        img, mask = self.pairs[idx]
        iv = Volume(img, np.eye(4))
        mv = Volume(mask, np.eye(4))
        margin = self.margin * rng.uniform(0.6, 1.6)
        box = expand_bbox(minimal_bbox(mask, 0.5), margin, iv.dims)
        target = (self.size, self.size, self.size)
        ic = resample(crop(iv, box), target).data
        mc = resample(crop(mv, box), target).data
        return ic, mc

    def get(self, idx: int, rng: np.random.Generator):
        img, mask = self._crop_pair(idx, rng)
        if self.patch_size is not None and self.patch_size < self.size:
            span = self.size - self.patch_size
            ox, oy, oz = rng.integers(0, span + 1, size=3)
            sel = (slice(ox, ox + self.patch_size), slice(oy, oy + self.patch_size),
                   slice(oz, oz + self.patch_size))
            img, mask = img[sel], mask[sel]
        if self.augment_cfg is not None:
            img, mask = augment_pair(img, mask, rng, self.augment_cfg)
        x = torch.from_numpy(np.ascontiguousarray(img))[None, None]
        t = torch.from_numpy(np.ascontiguousarray(np.clip(mask, 0.0, 1.0)))[None, None]
        return x, t


class SliceSource:
    """Batches of 5-neighboring-slice inputs for one view's 2D model."""

    def __init__(self, crop_source: CropSource, view: str, batch_size: int,
                 augment_cfg: AugmentConfig | None, slices_per_sample: int = 32):
        self.crops = crop_source
        self.axis = VIEW_AXES[view]
        self.batch_size = batch_size
        self.augment_cfg = augment_cfg
        self.slices_per_sample = slices_per_sample

    def __len__(self):
        return len(self.crops)

    def get(self, idx: int, rng: np.random.Generator):
        img, mask = self.crops._crop_pair(idx, rng)
        cfg = self.augment_cfg
        if cfg is not None:
            img, mask = augment_pair(img, mask, rng, cfg)
            if rng.random() < cfg.p_slice_merge:
                img, mask = slice_merge(img, mask, rng, cfg.slice_merge_alpha_max,
                                        axis=self.axis)
        s_img = np.moveaxis(img, self.axis, 0)
        s_mask = np.moveaxis(np.clip(mask, 0.0, 1.0), self.axis, 0)
        n = s_img.shape[0]
        take = min(self.batch_size, self.slices_per_sample)
        centers = rng.integers(0, n, size=take)
        nbrs = np.clip(centers[:, None] + np.arange(-2, 3)[None, :], 0, n - 1)
        x = torch.from_numpy(np.ascontiguousarray(s_img[nbrs]))          # (B, 5, H, W)
        t = torch.from_numpy(np.ascontiguousarray(s_mask[centers]))[:, None]
        return x, t


# --- loop ----------------------------------------------------------------

_GROUP_OF = (("stem_", "encoder"), ("encoders.", "encoder"),
             ("decoders.", "decoder"), ("head_", "head"))


def _param_groups(module: LinkNet):
    groups = {"encoder": [], "decoder": [], "head": []}
    for name, p in module.named_parameters():
        for prefix, g in _GROUP_OF:
            if name.startswith(prefix):
                groups[g].append(p)
                break
        else:
            raise ValueError(f"parameter {name!r} matches no group")
    return groups


def train_network(source, net_cfg: NetworkConfig, cfg: TrainConfig,
                  initial: NetworkWeights | None = None,
                  checkpoint_dir=None) -> tuple[NetworkWeights, list[LossLogEntry]]:
    """Train one network over `source`; deterministic given cfg.seed."""
    from .weights_io import save_weights

    if len(source) == 0:
        raise ValueError("empty training dataset")
    if cfg.deterministic:
        torch.set_num_threads(1)
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)

    if initial is not None:
        module = to_module(initial)
    else:
        from .network import build_linknet
        module = to_module(build_linknet(net_cfg, seed=cfg.seed))
    module.train()

    groups = _param_groups(module)
    mults = dict(zip(("encoder", "decoder", "head"), cfg.lr_multipliers))
    opt = RAdamLookahead(
        [{"params": groups[g], "lr": cfg.lr, "group_name": g} for g in groups],
        lr=cfg.lr, lookahead_k=cfg.lookahead_k, lookahead_alpha=cfg.lookahead_alpha)

    steps_per_epoch = len(source)
    total_steps = cfg.epochs * steps_per_epoch
    log: list[LossLogEntry] = []
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(source))
        for idx in order:
            x, t = source.get(int(idx), rng)
            base_lr = lr_at(step, total_steps, cfg.lr, cfg.flat_fraction)
            for group in opt.param_groups:
                group["lr"] = base_lr * mults[group["group_name"]]
            opt.zero_grad(set_to_none=True)
            logits = module(x)
            loss = generalized_dice_focal_loss(logits, t, cfg.lambda_focal, cfg.focal_gamma)
            loss.backward()
            total_norm = torch.nn.utils.clip_grad_norm_(module.parameters(), cfg.grad_clip)
            if total_norm > cfg.grad_clip:
                logger.debug("step %d: gradient norm %.3f clipped to %.3f",
                             step, total_norm, cfg.grad_clip)
            opt.step()
            log.append(LossLogEntry(step, epoch, base_lr, float(loss.item())))
            step += 1
        if checkpoint_dir is not None:
            w = weights_from_module(module, net_cfg)
            save_weights(w, Path(checkpoint_dir) / f"checkpoint_epoch{epoch:03d}.dbw")
        logger.info("epoch %d: mean loss %.4f", epoch,
                    float(np.mean([e.loss for e in log[-steps_per_epoch:]])))
    return weights_from_module(module, net_cfg), log


def train(dataset, net_cfg: NetworkConfig, train_cfg: TrainConfig,
          augment_cfg: AugmentConfig | None = None, size: int | None = None,
          checkpoint_dir=None) -> tuple[NetworkWeights, list[LossLogEntry]]:
    """Train on (image, mask) volume pairs resampled to a cubic grid.

    `dataset` holds (Volume, Volume) or (ndarray, ndarray) pairs of equal
    dims; `size` defaults to the first pair's leading dimension.
    """
    pairs = [(np.asarray(i.data if isinstance(i, Volume) else i, dtype=np.float32),
              np.asarray(m.data if isinstance(m, Volume) else m, dtype=np.float32))
             for i, m in dataset]
    if not pairs:
        raise ValueError("empty training dataset")
    if size is None:
        size = pairs[0][0].shape[0]
    source = VolumeSource(pairs, size, augment_cfg)
    return train_network(source, net_cfg, train_cfg, checkpoint_dir=checkpoint_dir)
