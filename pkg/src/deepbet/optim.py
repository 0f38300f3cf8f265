"""Rectified Adam with LookAhead, and the flat + cosine LR schedule.

The variance rectification follows the defining formulas: plain
bias-corrected momentum SGD while the approximated SMA length is <= 4,
the rectified adaptive update once it exceeds 4.  LookAhead interpolates
slow weights toward fast weights every k steps and resets the fast ones.
"""

from __future__ import annotations

import math

import torch
from torch.optim.optimizer import Optimizer

from .errors import NonFiniteGradient


def lr_at(step: int, total_steps: int, lr: float = 1e-3,
          flat_fraction: float = 0.75) -> float:
    """Constant `lr` through the flat phase, cosine annealing to 0 after."""
    if not 0 < flat_fraction < 1:
        raise ValueError("flat_fraction must lie in (0, 1)")
    flat_steps = int(math.floor(flat_fraction * total_steps))
    if step < flat_steps or total_steps <= flat_steps:
        return lr
    span = max(total_steps - 1 - flat_steps, 1)
    t = min(max((step - flat_steps) / span, 0.0), 1.0)
    return lr * (1.0 + math.cos(math.pi * t)) / 2.0


class RAdamLookahead(Optimizer):
    """Single-optimizer composition of rectified Adam and LookAhead."""

    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999),
                 eps: float = 1e-8, lookahead_k: int = 6,
                 lookahead_alpha: float = 0.5):
        if lr <= 0:
            raise ValueError("lr must be positive")
        if lookahead_k < 1:
            raise ValueError("lookahead_k must be >= 1")
        defaults = dict(lr=lr, betas=betas, eps=eps,
                        lookahead_k=lookahead_k, lookahead_alpha=lookahead_alpha)
        super().__init__(params, defaults)

    @torch.no_grad()
    def step(self, closure=None):
        loss = None
        if closure is not None:
            with torch.enable_grad():
                loss = closure()
        for group in self.param_groups:
            beta1, beta2 = group["betas"]
            lr = group["lr"]
            eps = group["eps"]
            k = group["lookahead_k"]
            alpha = group["lookahead_alpha"]
            rho_inf = 2.0 / (1.0 - beta2) - 1.0
            for p in group["params"]:
                if p.grad is None:
                    continue
                grad = p.grad
                if not torch.isfinite(grad).all():
                    raise NonFiniteGradient("gradient contains NaN/inf")
                state = self.state[p]
                if len(state) == 0:
                    state["step"] = 0
                    state["exp_avg"] = torch.zeros_like(p)
                    state["exp_avg_sq"] = torch.zeros_like(p)
                    state["slow"] = p.detach().clone()
                state["step"] += 1
                t = state["step"]
                m, v = state["exp_avg"], state["exp_avg_sq"]
                m.mul_(beta1).add_(grad, alpha=1.0 - beta1)
                v.mul_(beta2).addcmul_(grad, grad, value=1.0 - beta2)
                m_hat = m / (1.0 - beta1 ** t)
                rho_t = rho_inf - 2.0 * t * beta2 ** t / (1.0 - beta2 ** t)
                if rho_t > 4.0:
                    rect = math.sqrt(
                        ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf)
                        / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
                    v_hat = (v / (1.0 - beta2 ** t)).sqrt()
                    p.addcdiv_(m_hat, v_hat.add_(eps), value=-lr * rect)
                else:
                    p.add_(m_hat, alpha=-lr)
                if t % k == 0:
                    slow = state["slow"]
                    slow.add_(p - slow, alpha=alpha)
                    p.copy_(slow)
        return loss
