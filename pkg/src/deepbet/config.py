"""Built-in profiles and the key/value config file.

Two profiles ship with the tool: ``desk`` (64/128 stage sizes, small nets,
short schedules — fast enough to train and verify on a workstation) and
``paper`` (128/256, full-size nets and schedules).  A config file with
``[section]`` headers can override any knob; flags override the file.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .augment import AugmentConfig
from .errors import ConfigError
from .network import NetworkConfig, config_2d, config_3d
from .pipeline import PipelineConfig
from .preprocess import PreprocessConfig
from .training import TrainConfig


@dataclass(frozen=True)
class Profile:
    name: str
    preprocess: PreprocessConfig
    augment: AugmentConfig
    pipeline: PipelineConfig
    net3d: NetworkConfig
    net2d: NetworkConfig
    train_stage1: TrainConfig
    train_stage2: TrainConfig
    train_2d: TrainConfig


def desk_profile() -> Profile:
    augment = AugmentConfig(
        p_flip=0.5, p_rotate=0.3, p_zoom=0.3, p_warp=0.2, p_brightness=0.3,
        p_contrast=0.3, p_bias=0.2, p_ghosting=0.15, p_motion=0.15,
        p_noise=0.3, p_blur=0.2, p_slice_merge=0.5)
    return Profile(
        name="desk",
        preprocess=PreprocessConfig(),
        augment=augment,
        pipeline=PipelineConfig(stage1_size=64, stage2_size=128),
        net3d=config_3d(base_channels=16),
        net2d=config_2d(base_channels=16),
        train_stage1=TrainConfig(batch_size=1, epochs=6),
        train_stage2=TrainConfig(batch_size=1, epochs=10, patch_size=64),
        train_2d=TrainConfig(batch_size=32, epochs=4, slices_per_sample=32),
    )


def paper_profile() -> Profile:
    return Profile(
        name="paper",
        preprocess=PreprocessConfig(),
        augment=AugmentConfig(),
        pipeline=PipelineConfig(stage1_size=128, stage2_size=256),
        net3d=config_3d(base_channels=16),
        net2d=config_2d(base_channels=64),
        train_stage1=TrainConfig(batch_size=1, epochs=200),
        train_stage2=TrainConfig(batch_size=1, epochs=200),
        train_2d=TrainConfig(batch_size=32, epochs=10,
                             lr_multipliers=(0.0, 0.2, 1.0)),
    )


PROFILES = {"desk": desk_profile, "paper": paper_profile}


def get_profile(name: str) -> Profile:
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    return PROFILES[name]()


# --- config file ---------------------------------------------------------

_TUPLE_FLOAT = ("zoom_range", "ghost_intensity_range", "noise_std_range",
                "blur_sigma_range", "motion_severity_range")
_TUPLE_INT = ("ghost_count_range",)


def _parse_value(name: str, raw: str, current):
    raw = raw.strip()
    try:
        if isinstance(current, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            if name in _TUPLE_INT:
                return tuple(int(p) for p in parts)
            if name in _TUPLE_FLOAT or all(
                    p.replace(".", "", 1).replace("-", "", 1).isdigit() for p in parts):
                return tuple(float(p) for p in parts)
            return tuple(parts)
        return raw
    except ValueError as e:
        raise ConfigError(f"cannot parse {name} = {raw!r}: {e}") from e


def _apply_section(cfg, items: dict[str, str], section: str):
    known = {f.name for f in fields(cfg)}
    updates = {}
    for key, raw in items.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        updates[key] = _parse_value(key, raw, getattr(cfg, key))
    try:
        return replace(cfg, **updates)
    except ValueError as e:
        raise ConfigError(f"invalid value in section [{section}]: {e}") from e


_NETWORK_KEYS = ("base_channels_3d", "base_channels_2d", "norm")
_TRAIN_SHARED = ("lr", "lambda_focal", "focal_gamma", "lookahead_k",
                 "lookahead_alpha", "flat_fraction", "grad_clip", "seed",
                 "deterministic")
_TRAIN_KEYS = _TRAIN_SHARED + (
    "epochs_stage1", "epochs_stage2", "epochs_2d", "batch_size_2d",
    "slices_per_sample", "lr_mult_encoder", "lr_mult_decoder", "lr_mult_head")


def load_config_file(path, base: Profile) -> Profile:
    """Overlay a config file onto a profile; unknown sections/keys error."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    text = Path(path).read_text()
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    known_sections = {"preprocess", "augment", "network", "train", "pipeline"}
    unknown = set(parser.sections()) - known_sections
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}; expected {sorted(known_sections)}")

    profile = base
    if parser.has_section("preprocess"):
        profile = replace(profile, preprocess=_apply_section(
            profile.preprocess, dict(parser.items("preprocess")), "preprocess"))
    if parser.has_section("augment"):
        profile = replace(profile, augment=_apply_section(
            profile.augment, dict(parser.items("augment")), "augment"))
    if parser.has_section("pipeline"):
        profile = replace(profile, pipeline=_apply_section(
            profile.pipeline, dict(parser.items("pipeline")), "pipeline"))
    if parser.has_section("network"):
        items = dict(parser.items("network"))
        for key in items:
            if key not in _NETWORK_KEYS:
                raise ConfigError(f"unknown key {key!r} in section [network]")
        net3d, net2d = profile.net3d, profile.net2d
        if "base_channels_3d" in items:
            net3d = replace(net3d, base_channels=int(items["base_channels_3d"]))
        if "base_channels_2d" in items:
            net2d = replace(net2d, base_channels=int(items["base_channels_2d"]))
        if "norm" in items:
            net3d = replace(net3d, norm=items["norm"])
            net2d = replace(net2d, norm=items["norm"])
        profile = replace(profile, net3d=net3d, net2d=net2d)
    if parser.has_section("train"):
        items = dict(parser.items("train"))
        for key in items:
            if key not in _TRAIN_KEYS:
                raise ConfigError(f"unknown key {key!r} in section [train]")
        t1, t2, t2d = profile.train_stage1, profile.train_stage2, profile.train_2d
        for key in _TRAIN_SHARED:
            if key in items:
                value = _parse_value(key, items[key], getattr(t1, key))
                t1 = replace(t1, **{key: value})
                t2 = replace(t2, **{key: value})
                t2d = replace(t2d, **{key: value})
        if "epochs_stage1" in items:
            t1 = replace(t1, epochs=int(items["epochs_stage1"]))
        if "epochs_stage2" in items:
            t2 = replace(t2, epochs=int(items["epochs_stage2"]))
        if "epochs_2d" in items:
            t2d = replace(t2d, epochs=int(items["epochs_2d"]))
        if "batch_size_2d" in items:
            t2d = replace(t2d, batch_size=int(items["batch_size_2d"]))
        if "slices_per_sample" in items:
            t2d = replace(t2d, slices_per_sample=int(items["slices_per_sample"]))
        mult_keys = ("lr_mult_encoder", "lr_mult_decoder", "lr_mult_head")
        if any(k in items for k in mult_keys):
            mults = list(t2d.lr_multipliers)
            for i, key in enumerate(mult_keys):
                if key in items:
                    mults[i] = float(items[key])
            mt = tuple(mults)
            t1, t2, t2d = (replace(t1, lr_multipliers=mt),
                           replace(t2, lr_multipliers=mt),
                           replace(t2d, lr_multipliers=mt))
        profile = replace(profile, train_stage1=t1, train_stage2=t2, train_2d=t2d)
    return profile
