import math

import numpy as np
import pytest
import torch

from deepbet.errors import NonFiniteGradient
from deepbet.optim import RAdamLookahead, lr_at


class ScalarRangerReference:
    """Independent transcription of rectified Adam + LookAhead on one scalar.

    Written directly from the defining update equations with plain floats;
    shares no code with the package implementation.
    """

    def __init__(self, x0, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, k=6, alpha=0.5):
        self.x = float(x0)
        self.slow = float(x0)
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.k, self.alpha = k, alpha
        self.m = 0.0
        self.v = 0.0
        self.t = 0
        self.rho_inf = 2.0 / (1.0 - beta2) - 1.0

    def step(self, grad):
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        m_hat = self.m / (1 - self.b1 ** self.t)
        rho = self.rho_inf - 2 * self.t * self.b2 ** self.t / (1 - self.b2 ** self.t)
        if rho > 4.0:
            r = math.sqrt(((rho - 4) * (rho - 2) * self.rho_inf)
                          / ((self.rho_inf - 4) * (self.rho_inf - 2) * rho))
            v_hat = math.sqrt(self.v / (1 - self.b2 ** self.t))
            self.x -= self.lr * r * m_hat / (v_hat + self.eps)
        else:
            self.x -= self.lr * m_hat
        if self.t % self.k == 0:
            self.slow += self.alpha * (self.x - self.slow)
            self.x = self.slow


def run_package_scalar(grads, x0=1.0, **kw):
    p = torch.nn.Parameter(torch.tensor([x0], dtype=torch.float64))
    opt = RAdamLookahead([p], lr=kw.get("lr", 1e-3),
                         lookahead_k=kw.get("k", 6), lookahead_alpha=kw.get("alpha", 0.5))
    xs = []
    for g in grads:
        opt.zero_grad()
        p.grad = torch.tensor([g], dtype=torch.float64)
        opt.step()
        xs.append(float(p.item()))
    return xs


def test_matches_scalar_reference_fixed_gradient():
    ref = ScalarRangerReference(1.0)
    xs_ref = []
    for _ in range(20):
        ref.step(0.3)
        xs_ref.append(ref.x)
    xs_got = run_package_scalar([0.3] * 20)
    assert np.allclose(xs_got, xs_ref, atol=1e-10)


def test_matches_scalar_reference_quadratic():
    # gradient of f(x) = 0.5 x^2 evaluated on the reference's own trajectory
    ref = ScalarRangerReference(1.0)
    p = torch.nn.Parameter(torch.tensor([1.0], dtype=torch.float64))
    opt = RAdamLookahead([p], lr=1e-3)
    for step in range(100):
        g_ref = ref.x
        ref.step(g_ref)
        opt.zero_grad()
        p.grad = p.detach().clone()
        opt.step()
        assert abs(float(p.item()) - ref.x) < 1e-10, f"diverged at step {step}"


def test_fast_equals_slow_every_k_steps():
    p = torch.nn.Parameter(torch.tensor([1.0, -2.0], dtype=torch.float64))
    opt = RAdamLookahead([p], lr=1e-2, lookahead_k=6)
    rng = np.random.default_rng(0)
    for step in range(1, 25):
        opt.zero_grad()
        p.grad = torch.tensor(rng.normal(size=2), dtype=torch.float64)
        opt.step()
        state = opt.state[p]
        if step % 6 == 0:
            assert torch.equal(p.detach(), state["slow"])
        else:
            assert not torch.equal(p.detach(), state["slow"])


def test_zero_gradient_keeps_parameters():
    p = torch.nn.Parameter(torch.tensor([3.0], dtype=torch.float64))
    opt = RAdamLookahead([p], lr=1e-2)
    for _ in range(13):
        opt.zero_grad()
        p.grad = torch.zeros(1, dtype=torch.float64)
        opt.step()
    assert float(p.item()) == 3.0


def test_sgd_fallback_first_four_steps():
    # with beta2=0.999 the SMA length exceeds 4 only from step 5 on, so the
    # first four updates are plain bias-corrected momentum steps of size lr
    xs = run_package_scalar([1.0] * 5, x0=0.0, lr=0.01)
    for i, x in enumerate(xs[:4]):
        assert abs(x - (-0.01 * (i + 1))) < 1e-12
    assert abs(xs[4] - xs[3] + 0.01) > 1e-6   # rectified step is much smaller


def test_non_finite_gradient_raises():
    p = torch.nn.Parameter(torch.tensor([1.0]))
    opt = RAdamLookahead([p], lr=1e-2)
    p.grad = torch.tensor([float("nan")])
    with pytest.raises(NonFiniteGradient):
        opt.step()


# --- schedule ---------------------------------------------------------------

def test_lr_flat_then_cosine():
    lr = 1e-3
    total = 1000
    assert lr_at(0, total, lr) == lr
    assert lr_at(500, total, lr) == lr          # 50% of total: still flat
    assert lr_at(749, total, lr) == lr
    assert lr_at(750, total, lr) == lr          # junction: cos(0) == 1
    assert lr_at(total - 1, total, lr) < 1e-6 * lr


def test_lr_monotone_in_cosine_phase():
    lr = 1e-3
    total = 200
    values = [lr_at(s, total, lr) for s in range(150, 200)]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_lr_validation():
    with pytest.raises(ValueError):
        lr_at(0, 10, 1e-3, flat_fraction=1.5)
    with pytest.raises(ValueError):
        RAdamLookahead([torch.nn.Parameter(torch.zeros(1))], lr=-1.0)
    with pytest.raises(ValueError):
        RAdamLookahead([torch.nn.Parameter(torch.zeros(1))], lookahead_k=0)
