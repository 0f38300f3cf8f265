"""Generalized Dice + Focal loss on logits.

Two classes (foreground p, background 1-p) with class weights
1/(sum target_c)^2 and 1e-5 smoothing in numerator and denominator; classes
absent from the target get zero weight.  The focal term is the voxel mean
of -(1-p_t)^gamma * log(p_t), written in its soft-target two-sided form so
probabilistic ground truth is supported.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F

from .errors import ShapeMismatch

_SMOOTH = 1e-5


def _flatten(logits: torch.Tensor, target: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    if logits.shape != target.shape:
        raise ShapeMismatch(f"logits {tuple(logits.shape)} vs target {tuple(target.shape)}")
    if logits.ndim <= 3:               # plain volume/slice: one implicit batch item
        return logits.reshape(1, -1), target.reshape(1, -1)
    return logits.reshape(logits.shape[0], -1), target.reshape(target.shape[0], -1)


def generalized_dice_loss(logits: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    z, t = _flatten(logits, target)
    p = torch.sigmoid(z).double()
    t = t.double()
    sums = torch.stack([t.sum(dim=1), (1 - t).sum(dim=1)])            # (2, B)
    inter = torch.stack([(p * t).sum(dim=1), ((1 - p) * (1 - t)).sum(dim=1)])
    denom = torch.stack([(p + t).sum(dim=1), ((1 - p) + (1 - t)).sum(dim=1)])
    w = torch.where(sums > 0, 1.0 / (sums * sums).clamp(min=1e-300), torch.zeros_like(sums))
    num_b = (w * inter).sum(dim=0)
    den_b = (w * denom).sum(dim=0)
    gdl = 1.0 - (2.0 * num_b + _SMOOTH) / (den_b + _SMOOTH)
    return gdl.mean()


def focal_loss(logits: torch.Tensor, target: torch.Tensor,
               gamma: float = 2.0) -> torch.Tensor:
    z, t = _flatten(logits, target)
    z, t = z.double(), t.double()
    log_p = F.logsigmoid(z)
    log_q = F.logsigmoid(-z)
    p = torch.sigmoid(z)
    loss = -t * (1 - p) ** gamma * log_p - (1 - t) * p ** gamma * log_q
    return loss.mean()


def generalized_dice_focal_loss(logits: torch.Tensor, target: torch.Tensor,
                                lambda_focal: float = 0.2,
                                focal_gamma: float = 2.0) -> torch.Tensor:
    loss = generalized_dice_loss(logits, target)
    if lambda_focal != 0.0:
        loss = loss + lambda_focal * focal_loss(logits, target, focal_gamma)
    return loss
