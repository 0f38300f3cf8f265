"""End-to-end workflows shared by the CLI and the acceptance suite:
dataset loading, full pipeline training, and directory evaluation.
"""

from __future__ import annotations

import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import Profile
from .errors import ConfigError
from .evaluate import DiceReport, dice
from .network import NetworkWeights
from .nifti import read_nifti
from .orientation import canonicalize_orientation
from .preprocess import preprocess
from .training import CropSource, SliceSource, VolumeSource, train_network
from .volume import Volume

logger = logging.getLogger(__name__)


def load_pairs_from_dir(data_dir) -> list[tuple[str, Volume, Volume]]:
    """Collect (id, image, mask) from `<id>_img.nii[.gz]` / `<id>_mask.nii[.gz]`."""
    data_dir = Path(data_dir)
    pairs = []
    for img_path in sorted(data_dir.glob("*_img.nii*")):
        stem = img_path.name.split("_img.nii")[0]
        mask_path = None
        for suffix in (".nii.gz", ".nii"):
            cand = data_dir / f"{stem}_mask{suffix}"
            if cand.exists():
                mask_path = cand
                break
        if mask_path is None:
            raise ConfigError(f"no mask found for {img_path.name}")
        pairs.append((stem, read_nifti(img_path), read_nifti(mask_path)))
    if not pairs:
        raise ConfigError(f"no *_img.nii[.gz] files under {data_dir}")
    return pairs


def preprocess_pairs(pairs, profile: Profile) -> list[tuple[np.ndarray, np.ndarray]]:
    """Canonicalize and preprocess images; masks are canonicalized only."""
    out = []
    for item in pairs:
        img, mask = item[-2], item[-1]
        img_c = preprocess(canonicalize_orientation(img), profile.preprocess)
        mask_c = canonicalize_orientation(mask)
        out.append((img_c.data, mask_c.data))
    return out


def train_pipeline(pairs, profile: Profile, mode: str = "3d", seed: int = 0,
                   checkpoint_dir=None) -> tuple[dict[str, NetworkWeights], dict]:
    """Train every model the requested mode needs; returns (bundle, loss logs).

    Stage 1 always trains (it produces the crop for both paths).  Seeds for
    the individual models derive from `seed` so a run replays exactly.
    """
    if mode not in ("3d", "2d"):
        raise ConfigError(f"mode must be '3d' or '2d', got {mode!r}")
    prep = preprocess_pairs(pairs, profile)
    pcfg = profile.pipeline
    logs: dict[str, list] = {}

    def ckpt(name):
        if checkpoint_dir is None:
            return None
        d = Path(checkpoint_dir) / name
        d.mkdir(parents=True, exist_ok=True)
        return d

    logger.info("training stage-1 model (%d samples at %d^3)", len(prep), pcfg.stage1_size)
    s1_cfg = replace(profile.train_stage1, seed=seed)
    src1 = VolumeSource(prep, pcfg.stage1_size, profile.augment)
    stage1, logs["stage1"] = train_network(src1, profile.net3d, s1_cfg,
                                           checkpoint_dir=ckpt("stage1"))
    bundle = {"stage1": stage1}

    if mode == "3d":
        logger.info("training stage-2 model at %d^3", pcfg.stage2_size)
        s2_cfg = replace(profile.train_stage2, seed=seed + 1)
        crops = CropSource(prep, pcfg.stage2_size, pcfg.margin_fraction,
                           profile.augment, patch_size=s2_cfg.patch_size)
        bundle["stage2"], logs["stage2"] = train_network(
            crops, profile.net3d, s2_cfg, checkpoint_dir=ckpt("stage2"))
    else:
        crops = CropSource(prep, pcfg.stage2_size, pcfg.margin_fraction,
                           profile.augment)
        for i, view in enumerate(pcfg.views):
            logger.info("training 2D %s view model", view)
            vcfg = replace(profile.train_2d, seed=seed + 2 + i)
            src = SliceSource(crops, view, profile.train_2d.batch_size,
                              profile.augment,
                              slices_per_sample=profile.train_2d.slices_per_sample)
            bundle[f"view_{view}"], logs[f"view_{view}"] = train_network(
                src, profile.net2d, vcfg, checkpoint_dir=ckpt(f"view_{view}"))
    return bundle, logs


def evaluate_dirs(pred_dir, truth_dir, threshold: float = 0.5,
                  jobs: int = 1) -> DiceReport:
    """Dice between same-named mask files in two directories."""
    pred_dir, truth_dir = Path(pred_dir), Path(truth_dir)
    preds = sorted(p for p in pred_dir.iterdir()
                   if p.name.endswith((".nii", ".nii.gz")))
    if not preds:
        raise ConfigError(f"no NIfTI files under {pred_dir}")
    tasks = []
    for p in preds:
        t = truth_dir / p.name
        if not t.exists():
            raise ConfigError(f"no ground truth for {p.name} under {truth_dir}")
        tasks.append((p, t))

    def score(pair):
        p, t = pair
        pd = read_nifti(p).data >= threshold
        td = read_nifti(t).data >= threshold
        return p.name, dice(pd, td)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            entries = list(ex.map(score, tasks))
    else:
        entries = [score(t) for t in tasks]
    return DiceReport(entries=entries, threshold=threshold)
