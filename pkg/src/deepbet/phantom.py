"""Synthetic head phantoms with probabilistic brain masks.

Each phantom is a lobed ellipsoidal "brain" wrapped in a darker skull shell
and scalp layer over a noisy background.  The mask is a smooth sigmoid of
the signed distance to the brain surface (1-2 voxel transition), so it is
genuinely probabilistic rather than binary.  Fully deterministic per seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SpecInfeasible
from .preprocess import evaluate_polynomial, polynomial_exponents
from .resample import rotation_about_center, warp_array
from .volume import Volume


_LOBE_CLIP = (0.92, 1.08)


@dataclass(frozen=True)
class PhantomSpec:
    seed: int = 0
    dims: tuple[int, int, int] = (64, 64, 64)
    brain_radius_frac: tuple[float, float] = (0.295, 0.345)
    lobe_amplitude: float = 0.05
    center_jitter_frac: float = 0.01
    gap_frac: tuple[float, float] = (0.0125, 0.022)      # of the volume edge
    skull_frac: tuple[float, float] = (0.017, 0.030)
    scalp_frac: tuple[float, float] = (0.017, 0.030)
    transition_voxels: float = 1.5
    noise_std_range: tuple[float, float] = (0.005, 0.03)
    bias_magnitude: float = 0.2
    bias_order: int = 4
    max_rotate_deg: float = 8.0
    p_rotate: float = 0.5
    intensity_scale_range: tuple[float, float] = (300.0, 1200.0)


def _lobed_radius(ux, uy, uz, rng: np.random.Generator, amplitude: float) -> np.ndarray:
    """Low-order directional modulation of the ellipsoid radius."""
    mod = np.ones_like(ux)
    terms1 = (ux, uy, uz)
    terms2 = (ux * uy, uy * uz, ux * uz, ux * ux - 1 / 3, uy * uy - 1 / 3)
    for t in terms1:
        mod = mod + rng.uniform(-amplitude, amplitude) * t
    for t in terms2:
        mod = mod + rng.uniform(-amplitude, amplitude) * t
    return np.clip(mod, *_LOBE_CLIP)


def generate(spec: PhantomSpec) -> tuple[Volume, Volume]:
    """Build one (image, probability mask) pair; bit-identical per seed."""
    rng = np.random.default_rng(spec.seed)
    dims = spec.dims
    d_arr = np.asarray(dims, dtype=np.float64)

    jit = spec.center_jitter_frac
    center = d_arr / 2.0 + rng.uniform(-jit, jit, size=3) * d_arr
    semi = rng.uniform(*spec.brain_radius_frac, size=3) * d_arr
    edge = float(d_arr.min())
    gap = rng.uniform(*spec.gap_frac) * edge
    t_skull = rng.uniform(*spec.skull_frac) * edge
    t_scalp = rng.uniform(*spec.scalp_frac) * edge

    shell = gap + t_skull + t_scalp
    max_reach = semi * _LOBE_CLIP[1] + shell
    room = np.minimum(center, d_arr - 1 - center)
    if np.any(max_reach >= room):
        raise SpecInfeasible(
            f"brain {semi} + shell {shell:.1f} exceeds volume {dims} around {center}")

    xs = (np.arange(dims[0]) - center[0]).reshape(-1, 1, 1)
    ys = (np.arange(dims[1]) - center[1]).reshape(1, -1, 1)
    zs = (np.arange(dims[2]) - center[2]).reshape(1, 1, -1)
    r = np.sqrt(xs ** 2 + ys ** 2 + zs ** 2)
    r_safe = np.maximum(r, 1e-9)
    ux, uy, uz = xs / r_safe, ys / r_safe, zs / r_safe

    # elliptical norm and Euclidean signed distance to the lobed surface
    norm_u = np.sqrt((ux / semi[0]) ** 2 + (uy / semi[1]) ** 2 + (uz / semi[2]) ** 2)
    rho = r * norm_u
    boundary = _lobed_radius(ux, uy, uz, rng, spec.lobe_amplitude)
    dist = (boundary - rho) / np.maximum(norm_u, 1e-9)   # >0 inside the brain

    tau = spec.transition_voxels / 4.0
    mask = 1.0 / (1.0 + np.exp(-np.clip(dist / tau, -60, 60)))

    # tissue intensities: scalp < skull < brain bands
    gm = rng.uniform(0.55, 0.70)
    wm = rng.uniform(0.85, 1.00)
    core_depth = rng.uniform(2.0, 4.0)
    brain_int = gm + (wm - gm) / (1.0 + np.exp(-np.clip((dist - core_depth) / 2.0, -60, 60)))
    band_amp = rng.uniform(0.0, 0.05)
    band_freq = rng.uniform(2.0, 5.0)
    band_phase = rng.uniform(0.0, 2 * np.pi)
    brain_int = brain_int * (1.0 + band_amp * np.sin(band_freq * rho * 2 * np.pi + band_phase))
    skull_int = rng.uniform(0.32, 0.45)
    scalp_int = rng.uniform(0.15, 0.28)

    def band(level_hi, level_lo, width=0.7):
        """Soft indicator of level_lo < -dist <= level_hi."""
        neg = -dist
        return (1.0 / (1.0 + np.exp(-np.clip((neg - level_lo) / width, -60, 60)))
                * 1.0 / (1.0 + np.exp(-np.clip((level_hi - neg) / width, -60, 60))))

    img = (brain_int * mask
           + skull_int * band(gap + t_skull, gap)
           + scalp_int * band(gap + t_skull + t_scalp, gap + t_skull))

    if spec.bias_magnitude > 0:
        exponents = polynomial_exponents(spec.bias_order)
        coeffs = rng.uniform(-1.0, 1.0, size=len(exponents))
        field = evaluate_polynomial(coeffs, exponents, dims)
        peak = np.abs(field).max()
        if peak > 0:
            field *= rng.uniform(0.0, spec.bias_magnitude) / peak
        img = img * np.exp(field)

    if rng.random() < spec.p_rotate and spec.max_rotate_deg > 0:
        axis = int(rng.integers(0, 3))
        angle = rng.uniform(-spec.max_rotate_deg, spec.max_rotate_deg)
        m = rotation_about_center(dims, axis, angle)
        img = warp_array(img.astype(np.float32), m)
        mask = warp_array(mask.astype(np.float32), m)

    scale = rng.uniform(*spec.intensity_scale_range)
    noise = rng.uniform(*spec.noise_std_range)
    img = img * scale + rng.normal(0.0, noise * scale, size=dims)
    img = np.maximum(img, 0.0)

    affine = np.eye(4)
    affine[:3, 3] = -(d_arr - 1) / 2.0
    image = Volume(img.astype(np.float32), affine)
    prob = Volume(np.clip(mask, 0.0, 1.0).astype(np.float32), affine)
    return image, prob


def generate_set(n: int, base_seed: int = 0,
                 dims: tuple[int, int, int] = (64, 64, 64)) -> list[tuple[int, Volume, Volume]]:
    """n phantoms with distinct seeds; entries are (seed, image, mask)."""
    out = []
    for i in range(n):
        seed = base_seed + i
        img, mask = generate(PhantomSpec(seed=seed, dims=dims))
        out.append((seed, img, mask))
    return out


def split_by_parity(dataset):
    """(train, held_out) split: even seeds train, odd seeds held out."""
    train = [s for s in dataset if s[0] % 2 == 0]
    held = [s for s in dataset if s[0] % 2 == 1]
    return train, held
