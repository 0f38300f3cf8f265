"""LinkNet segmentation networks with 2D and 3D kernels.

The encoder is a residual stack (two basic blocks per stage, channel
schedule base * {1, 2, 4, 8}); each decoder output is ADDED to the matching
encoder output, which is what separates LinkNet from concatenating U-Nets.
The 3D variant runs the channel schedule divided by 4 and instance
normalization so it trains at batch size 1.  Decoders upsample to the
recorded skip sizes, so any input size >= 1 per axis works; the natural
operating sizes are multiples of 32 (the total stride).
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import NonFiniteLoss, ShapeMismatch

_CONV = {2: nn.Conv2d, 3: nn.Conv3d}
_CONVT = {2: nn.ConvTranspose2d, 3: nn.ConvTranspose3d}
_POOL = {2: nn.MaxPool2d, 3: nn.MaxPool3d}
_BNORM = {2: nn.BatchNorm2d, 3: nn.BatchNorm3d}


@dataclass(frozen=True)
class NetworkConfig:
    rank: int = 3                 # 2 or 3 (kernel dimensionality)
    in_channels: int = 1
    base_channels: int = 16
    encoder_depth: int = 4
    norm: str = "instance"        # "instance" | "batch"
    out_channels: int = 1

    def __post_init__(self):
        if self.rank not in (2, 3):
            raise ValueError("rank must be 2 or 3")
        if self.encoder_depth < 1 or self.base_channels < 1 or self.in_channels < 1:
            raise ValueError("channels and depth must be >= 1")
        if self.norm not in ("instance", "batch"):
            raise ValueError("norm must be 'instance' or 'batch'")

    @property
    def channel_schedule(self) -> list[int]:
        return [self.base_channels * (2 ** i) for i in range(self.encoder_depth)]


def config_3d(base_channels: int = 16) -> NetworkConfig:
    return NetworkConfig(rank=3, in_channels=1, base_channels=base_channels)


def config_2d(base_channels: int = 64, in_channels: int = 5) -> NetworkConfig:
    return NetworkConfig(rank=2, in_channels=in_channels, base_channels=base_channels)


class InstanceNorm(nn.Module):
    """Per-sample, per-channel affine normalization.

    Same math as torch's InstanceNorm (biased variance, eps inside the
    sqrt) but without the minimum-spatial-size restriction, since the deep
    encoder stages can legitimately reach 1-voxel extents.
    """

    def __init__(self, channels: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))

    def forward(self, x):
        dims = tuple(range(2, x.ndim))
        mu = x.mean(dim=dims, keepdim=True)
        var = x.var(dim=dims, unbiased=False, keepdim=True)
        shape = (1, -1) + (1,) * (x.ndim - 2)
        xh = (x - mu) * torch.rsqrt(var + self.eps)
        return xh * self.weight.view(shape) + self.bias.view(shape)


def _norm(cfg: NetworkConfig, channels: int) -> nn.Module:
    if cfg.norm == "instance":
        return InstanceNorm(channels)
    return _BNORM[cfg.rank](channels)


class _BasicBlock(nn.Module):
    def __init__(self, cfg: NetworkConfig, c_in: int, c_out: int, stride: int):
        super().__init__()
        conv = _CONV[cfg.rank]
        self.conv1 = conv(c_in, c_out, 3, stride=stride, padding=1)
        self.norm1 = _norm(cfg, c_out)
        self.conv2 = conv(c_out, c_out, 3, stride=1, padding=1)
        self.norm2 = _norm(cfg, c_out)
        self.relu = nn.ReLU(inplace=True)
        if stride != 1 or c_in != c_out:
            self.shortcut = nn.Sequential(
                conv(c_in, c_out, 1, stride=stride), _norm(cfg, c_out))
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        out = self.relu(self.norm1(self.conv1(x)))
        out = self.norm2(self.conv2(out))
        return self.relu(out + self.shortcut(x))


class _EncoderStage(nn.Module):
    def __init__(self, cfg: NetworkConfig, c_in: int, c_out: int, stride: int):
        super().__init__()
        self.block1 = _BasicBlock(cfg, c_in, c_out, stride)
        self.block2 = _BasicBlock(cfg, c_out, c_out, 1)

    def forward(self, x):
        return self.block2(self.block1(x))


class _DecoderStage(nn.Module):
    def __init__(self, cfg: NetworkConfig, c_in: int, c_out: int, stride: int):
        super().__init__()
        conv, convt = _CONV[cfg.rank], _CONVT[cfg.rank]
        mid = max(c_in // 4, 1)
        self.conv_in = conv(c_in, mid, 1)
        self.norm_in = _norm(cfg, mid)
        self.up = convt(mid, mid, 3, stride=stride, padding=1)
        self.norm_up = _norm(cfg, mid)
        self.conv_out = conv(mid, c_out, 1)
        self.norm_out = _norm(cfg, c_out)
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x, output_size):
        x = self.relu(self.norm_in(self.conv_in(x)))
        x = self.relu(self.norm_up(self.up(x, output_size=list(output_size))))
        return self.relu(self.norm_out(self.conv_out(x)))


class LinkNet(nn.Module):
    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.cfg = cfg
        conv, convt, pool = _CONV[cfg.rank], _CONVT[cfg.rank], _POOL[cfg.rank]
        ch = cfg.channel_schedule
        self.stem_conv = conv(cfg.in_channels, ch[0], 7, stride=2, padding=3)
        self.stem_norm = _norm(cfg, ch[0])
        self.relu = nn.ReLU(inplace=True)
        self.pool = pool(3, stride=2, padding=1)

        strides = [1] + [2] * (cfg.encoder_depth - 1)
        self.encoders = nn.ModuleList(
            [_EncoderStage(cfg, ch[0] if i == 0 else ch[i - 1], ch[i], strides[i])
             for i in range(cfg.encoder_depth)])
        self.decoders = nn.ModuleList(
            [_DecoderStage(cfg, ch[i], ch[0] if i == 0 else ch[i - 1], strides[i])
             for i in range(cfg.encoder_depth)])

        head_ch = max(ch[0] // 2, 1)
        self.head_up1 = convt(ch[0], head_ch, 3, stride=2, padding=1)
        self.head_norm1 = _norm(cfg, head_ch)
        self.head_conv = conv(head_ch, head_ch, 3, stride=1, padding=1)
        self.head_norm2 = _norm(cfg, head_ch)
        self.head_up2 = convt(head_ch, cfg.out_channels, 2, stride=2)

    def forward(self, x):
        size_in = x.shape[2:]
        x = self.relu(self.stem_norm(self.stem_conv(x)))
        size_stem = x.shape[2:]
        x = self.pool(x)
        skips = [x]
        for enc in self.encoders:
            x = enc(x)
            skips.append(x)
        d = skips[-1]
        for i in range(self.cfg.encoder_depth - 1, -1, -1):
            d = self.decoders[i](d, skips[i].shape[2:]) + skips[i]
        d = self.relu(self.head_norm1(self.head_up1(d, output_size=list(size_stem))))
        d = self.relu(self.head_norm2(self.head_conv(d)))
        return self.head_up2(d, output_size=list(size_in))


@dataclass(frozen=True)
class NetworkWeights:
    """Ordered named-tensor table plus the config needed to rebuild the net."""
    config: NetworkConfig
    tensors: "OrderedDict[str, np.ndarray]"

    def __post_init__(self):
        for name, t in self.tensors.items():
            if not np.isfinite(t).all():
                raise ValueError(f"non-finite values in tensor {name!r}")

    def names(self) -> list[str]:
        return list(self.tensors.keys())


def _init_module(module: nn.Module, seed: int) -> None:
    gen = torch.Generator().manual_seed(seed)
    conv_types = (nn.Conv2d, nn.Conv3d, nn.ConvTranspose2d, nn.ConvTranspose3d)
    norm_types = (InstanceNorm, nn.BatchNorm2d, nn.BatchNorm3d)
    for m in module.modules():
        if isinstance(m, conv_types):
            nn.init.kaiming_uniform_(m.weight, nonlinearity="relu", generator=gen)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, norm_types):
            if m.weight is not None:
                nn.init.ones_(m.weight)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def build_linknet(config: NetworkConfig, seed: int = 0) -> NetworkWeights:
    """Fresh He-uniform weights (norm scale 1 / shift 0), deterministic per seed."""
    module = LinkNet(config)
    _init_module(module, seed)
    return weights_from_module(module, config)


def weights_from_module(module: nn.Module, config: NetworkConfig) -> NetworkWeights:
    tensors = OrderedDict(
        (name, value.detach().cpu().numpy().astype(np.float32).copy())
        for name, value in module.state_dict().items())
    return NetworkWeights(config=config, tensors=tensors)


def to_module(weights: NetworkWeights, dtype: torch.dtype = torch.float32) -> LinkNet:
    module = LinkNet(weights.config).to(dtype)
    state = {}
    for name, arr in weights.tensors.items():
        t = torch.from_numpy(np.ascontiguousarray(arr)).to(dtype)
        state[name] = t
    try:
        module.load_state_dict(state, strict=True)
    except RuntimeError as e:
        raise ShapeMismatch(f"weights do not fit the configured network: {e}") from e
    return module


def _as_input_tensor(config: NetworkConfig, x: np.ndarray,
                     dtype: torch.dtype) -> torch.Tensor:
    x = np.asarray(x)
    if config.rank == 3:
        if x.ndim != 3:
            raise ShapeMismatch(f"3D network expects a 3D array, got shape {x.shape}")
        t = torch.from_numpy(np.ascontiguousarray(x)).to(dtype)[None, None]
    else:
        if x.ndim != 3 or x.shape[0] != config.in_channels:
            raise ShapeMismatch(
                f"2D network expects ({config.in_channels}, H, W), got {x.shape}")
        t = torch.from_numpy(np.ascontiguousarray(x)).to(dtype)[None]
    return t


def forward(weights: NetworkWeights, x: np.ndarray) -> np.ndarray:
    """Logits with the same spatial shape as the input."""
    module = to_module(weights)
    module.eval()
    t = _as_input_tensor(weights.config, x, torch.float32)
    with torch.inference_mode():
        out = module(t)
    return out[0, 0].numpy()


def gradients(weights: NetworkWeights, x: np.ndarray, target: np.ndarray,
              lambda_focal: float = 0.2, focal_gamma: float = 2.0,
              loss_scale: float = 1.0, float64: bool = False,
              ) -> tuple[float, "OrderedDict[str, np.ndarray]"]:
    """Loss and a gradient table aligned 1:1 with the weight table."""
    from .losses import generalized_dice_focal_loss

    if weights.config.rank == 3 and np.shape(x) != np.shape(target):
        raise ShapeMismatch(f"input {np.shape(x)} vs target {np.shape(target)}")
    dtype = torch.float64 if float64 else torch.float32
    module = to_module(weights, dtype=dtype)
    module.train()
    xt = _as_input_tensor(weights.config, x, dtype)
    tt = torch.from_numpy(np.ascontiguousarray(target)).to(dtype)
    while tt.ndim < xt.ndim:
        tt = tt[None]
    if tt.shape[-len(xt.shape[2:]):] != xt.shape[2:] and weights.config.rank == 2:
        raise ShapeMismatch(f"target {target.shape} does not match input slices")
    logits = module(xt)
    loss = generalized_dice_focal_loss(logits, tt, lambda_focal, focal_gamma) * loss_scale
    if not torch.isfinite(loss):
        raise NonFiniteLoss(f"loss = {loss.item()}")
    loss.backward()
    params = dict(module.named_parameters())
    out_dtype = np.float64 if float64 else np.float32
    table: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name in weights.tensors:
        if name in params and params[name].grad is not None:
            table[name] = params[name].grad.detach().numpy().astype(out_dtype).copy()
        else:
            table[name] = np.zeros(weights.tensors[name].shape, dtype=out_dtype)
    return float(loss.item()), table


def parameter_count(config: NetworkConfig) -> int:
    return sum(p.numel() for p in LinkNet(config).parameters())
