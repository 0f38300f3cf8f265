"""Intensity preparation: bias-field correction, quantile clipping, and
fixed-moment normalization, applied in that order.

Bias correction divides out ``exp(P)`` where ``P`` is a least-squares
polynomial fit to log-intensities over foreground voxels; the fit is
centered so the mean foreground log-intensity is preserved.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import NonPositiveIntensities, SingularFit, ZeroVariance
from .volume import Volume

_EPS_STD = 1e-8
_MAX_FIT_VOXELS = 150_000


@dataclass(frozen=True)
class PreprocessConfig:
    q_lo: float = 0.005
    q_hi: float = 0.995
    target_mean: float = 0.449
    target_std: float = 0.229
    bias_order: int = 4
    bias_enabled: bool = True

    def __post_init__(self):
        if not 0.0 <= self.q_lo < self.q_hi <= 1.0:
            raise ValueError("need 0 <= q_lo < q_hi <= 1")
        if self.target_std <= 0:
            raise ValueError("target_std must be positive")
        if self.bias_order < 0:
            raise ValueError("bias_order must be >= 0")


def clip_intensities(v: Volume, q_lo: float = 0.005, q_hi: float = 0.995) -> Volume:
    # order-statistic quantiles (exact selection): keeps clipping idempotent
    lo, hi = np.quantile(v.data, [q_lo, q_hi], method="lower")
    return v.with_data(np.clip(v.data, lo, hi))


def normalize(v: Volume, target_mean: float = 0.449, target_std: float = 0.229) -> Volume:
    data = v.data.astype(np.float64)
    std = data.std()
    if std <= _EPS_STD:
        raise ZeroVariance(f"intensity std {std} too small to normalize")
    out = (data - data.mean()) / std * target_std + target_mean
    return v.with_data(out.astype(np.float32))


def otsu_threshold(data: np.ndarray, bins: int = 256) -> float:
    """Threshold maximizing between-class variance of the histogram."""
    data = np.asarray(data, dtype=np.float64).ravel()
    lo, hi = data.min(), data.max()
    if hi <= lo:
        return float(lo)
    hist, edges = np.histogram(data, bins=bins, range=(lo, hi))
    centers = (edges[:-1] + edges[1:]) / 2
    weight = hist.astype(np.float64)
    w0 = np.cumsum(weight)
    w1 = w0[-1] - w0
    m = np.cumsum(weight * centers)
    mean0 = m / np.maximum(w0, 1e-12)
    mean1 = (m[-1] - m) / np.maximum(w1, 1e-12)
    valid = (w0 > 0) & (w1 > 0)
    var_between = np.where(valid, w0 * w1 * (mean0 - mean1) ** 2, -np.inf)
    return float(centers[int(np.argmax(var_between))])


def polynomial_exponents(order: int) -> list[tuple[int, int, int]]:
    """All 3-variable monomial exponents with total degree <= order."""
    return [(a, b, c)
            for a, b, c in product(range(order + 1), repeat=3)
            if a + b + c <= order]


def normalized_coords(dims) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-axis coordinates mapped into [-1, 1], broadcastable to the grid."""
    out = []
    for a, n in enumerate(dims):
        c = np.linspace(-1.0, 1.0, n) if n > 1 else np.zeros(1)
        shape = [1, 1, 1]
        shape[a] = n
        out.append(c.reshape(shape))
    return tuple(out)


def evaluate_polynomial(coeffs: np.ndarray, exponents, dims) -> np.ndarray:
    """Evaluate sum of coeff * x^a y^b z^c over the full grid (64-bit)."""
    xs, ys, zs = normalized_coords(dims)
    field = np.zeros(dims, dtype=np.float64)
    for coef, (a, b, c) in zip(coeffs, exponents):
        if coef == 0.0:
            continue
        field += coef * (xs ** a) * (ys ** b) * (zs ** c)
    return field


def fit_log_polynomial(v: Volume, order: int,
                       foreground: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares polynomial fit to log-intensities on foreground voxels.

    Returns (coefficients, foreground mask).  Foreground defaults to voxels
    above the Otsu threshold.  Large foregrounds are strided down to keep the
    design matrix small; the stride is deterministic.
    """
    data = v.data
    if foreground is None:
        foreground = data > otsu_threshold(data)
    idx = np.flatnonzero(foreground.ravel())
    exponents = polynomial_exponents(order)
    if idx.size < len(exponents):
        raise SingularFit(f"{idx.size} foreground voxels for {len(exponents)} terms")
    if idx.size > _MAX_FIT_VOXELS:
        idx = idx[:: int(np.ceil(idx.size / _MAX_FIT_VOXELS))]
    vals = data.ravel()[idx].astype(np.float64)
    if vals.min() <= 0:
        raise NonPositiveIntensities("bias fit needs positive foreground intensities")
    xs, ys, zs = normalized_coords(v.dims)
    xi, yi, zi = np.unravel_index(idx, v.dims)
    px, py, pz = xs.ravel()[xi], ys.ravel()[yi], zs.ravel()[zi]
    design = np.stack([(px ** a) * (py ** b) * (pz ** c) for a, b, c in exponents], axis=1)
    target = np.log(vals)
    coeffs, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < len(exponents):
        raise SingularFit(f"design matrix rank {rank} < {len(exponents)} terms")
    return coeffs, foreground


def correct_bias(v: Volume, order: int = 4) -> Volume:
    """Divide out a smooth multiplicative field fit in the log domain.

    The fitted polynomial is centered on the foreground so the mean
    foreground log-intensity is unchanged.  Outside the foreground the
    field is clamped to its foreground range: the fit has no support
    there and high-order extrapolation diverges at the corners.
    """
    coeffs, foreground = fit_log_polynomial(v, order)
    field = evaluate_polynomial(coeffs, polynomial_exponents(order), v.dims)
    fg_vals = field[foreground]
    field = np.clip(field, fg_vals.min(), fg_vals.max())
    field -= fg_vals.mean()
    out = v.data.astype(np.float64) / np.exp(field)
    return v.with_data(out.astype(np.float32))


def preprocess(v: Volume, cfg: PreprocessConfig | None = None) -> Volume:
    """Full chain: bias correction (optional) -> clip -> normalize."""
    cfg = cfg or PreprocessConfig()
    if cfg.bias_enabled:
        v = correct_bias(v, cfg.bias_order)
    v = clip_intensities(v, cfg.q_lo, cfg.q_hi)
    return normalize(v, cfg.target_mean, cfg.target_std)
