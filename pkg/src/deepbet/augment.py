"""Stochastic training-time transforms.

Spatial transforms (flip/rotate/zoom/warp) are composed into a single
resampling pass and applied identically to image and mask; masks are
interpolated trilinearly since ground truth is probabilistic.  Every
transform is the exact identity at zero strength and fully deterministic
given the caller's rng.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import TooFewSlices
from .preprocess import evaluate_polynomial, polynomial_exponents
from .resample import warp_array


@dataclass(frozen=True)
class AugmentConfig:
    p_flip: float = 0.5
    p_rotate: float = 0.5
    p_zoom: float = 0.5
    p_warp: float = 0.5
    p_brightness: float = 0.5
    p_contrast: float = 0.5
    p_bias: float = 0.5
    p_ghosting: float = 0.5
    p_motion: float = 0.5
    p_noise: float = 0.5
    p_blur: float = 0.5
    p_slice_merge: float = 0.5
    max_rotate_deg: float = 15.0
    max_lighting: float = 0.5
    max_warp: float = 0.1
    zoom_range: tuple[float, float] = (1.0, 1.1)
    bias_order: int = 4
    bias_magnitude: float = 0.3
    ghost_count_range: tuple[int, int] = (2, 6)
    ghost_intensity_range: tuple[float, float] = (0.2, 0.8)
    noise_std_range: tuple[float, float] = (0.0, 0.10)
    blur_sigma_range: tuple[float, float] = (0.25, 1.25)
    motion_severity_range: tuple[float, float] = (0.5, 2.5)
    slice_merge_alpha_max: float = 0.5

    def __post_init__(self):
        for name in ("zoom_range", "ghost_count_range", "ghost_intensity_range",
                     "noise_std_range", "blur_sigma_range", "motion_severity_range"):
            lo, hi = getattr(self, name)
            if not (0 <= lo <= hi):
                raise ValueError(f"{name} must be a non-negative (lo, hi) range")
        if not 0.0 <= self.slice_merge_alpha_max <= 0.5:
            raise ValueError("slice_merge_alpha_max must lie in [0, 0.5]")
        for name in ("max_rotate_deg", "max_lighting", "max_warp"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def zeroed(self) -> "AugmentConfig":
        """Copy with every application probability forced to 0."""
        probs = {f: 0.0 for f in self.__dataclass_fields__ if f.startswith("p_")}
        return AugmentConfig(**{**self.__dict__, **probs})


# --- spatial -------------------------------------------------------------

def _rotation_matrix(axis_u: np.ndarray, angle_rad: float) -> np.ndarray:
    ux, uy, uz = axis_u
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    cc = 1 - c
    r = np.array([
        [c + ux * ux * cc, ux * uy * cc - uz * s, ux * uz * cc + uy * s],
        [uy * ux * cc + uz * s, c + uy * uy * cc, uy * uz * cc - ux * s],
        [uz * ux * cc - uy * s, uz * uy * cc + ux * s, c + uz * uz * cc],
    ])
    m = np.eye(4)
    m[:3, :3] = r
    return m


def _about_center(m: np.ndarray, dims) -> np.ndarray:
    center = np.array([(d - 1) / 2.0 for d in dims])
    t_in = np.eye(4)
    t_in[:3, 3] = center
    t_out = np.eye(4)
    t_out[:3, 3] = -center
    return t_in @ m @ t_out


def draw_spatial_matrix(dims, rng: np.random.Generator,
                        cfg: AugmentConfig) -> np.ndarray | None:
    """Sample one output->input map for this draw, or None for identity.

    The rng consumption is fixed regardless of which transforms fire, so a
    seeded rng replays identically.
    """
    do_flip = rng.random() < cfg.p_flip
    do_rot = rng.random() < cfg.p_rotate
    axis_raw = rng.normal(size=3)
    angle = rng.uniform(-cfg.max_rotate_deg, cfg.max_rotate_deg)
    do_zoom = rng.random() < cfg.p_zoom
    zoom = rng.uniform(*cfg.zoom_range)
    do_warp = rng.random() < cfg.p_warp
    tilt = rng.uniform(-cfg.max_warp, cfg.max_warp, size=3)

    m = np.eye(4)
    active = False
    if do_flip:
        f = np.eye(4)
        f[0, 0] = -1.0
        f[0, 3] = dims[0] - 1.0
        m = m @ f
        active = True
    if do_rot and angle != 0.0:
        u = axis_raw / max(np.linalg.norm(axis_raw), 1e-12)
        m = m @ _about_center(_rotation_matrix(u, -np.deg2rad(angle)), dims)
        active = True
    if do_zoom and zoom != 1.0:
        z = np.eye(4)
        z[0, 0] = z[1, 1] = z[2, 2] = 1.0 / zoom
        m = m @ _about_center(z, dims)
        active = True
    if do_warp and np.any(tilt != 0.0):
        # projective tilt expressed in [-1, 1] normalized coordinates
        scale = np.array([2.0 / max(d - 1, 1) for d in dims])
        to_norm = np.diag(np.append(scale, 1.0))
        to_norm[:3, 3] = -1.0
        proj = np.eye(4)
        proj[3, :3] = tilt
        m = m @ np.linalg.inv(to_norm) @ proj @ to_norm
        active = True
    return m if active else None


def spatial_transform(img: np.ndarray, mask: np.ndarray, rng: np.random.Generator,
                      cfg: AugmentConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """One shared random flip/rotate/zoom/warp applied to both arrays."""
    cfg = cfg or AugmentConfig()
    m = draw_spatial_matrix(img.shape, rng, cfg)
    if m is None:
        return img, mask
    return warp_array(img, m), warp_array(mask, m)


# --- intensity -----------------------------------------------------------

def intensity_transform(img: np.ndarray, rng: np.random.Generator,
                        cfg: AugmentConfig | None = None) -> np.ndarray:
    """Random brightness shift and contrast scaling: b + c * img."""
    cfg = cfg or AugmentConfig()
    do_bright = rng.random() < cfg.p_brightness
    b = rng.uniform(-cfg.max_lighting, cfg.max_lighting)
    do_contrast = rng.random() < cfg.p_contrast
    log_max = np.log1p(cfg.max_lighting)
    c = np.exp(rng.uniform(-log_max, log_max))
    if not do_bright:
        b = 0.0
    if not do_contrast:
        c = 1.0
    if b == 0.0 and c == 1.0:
        return img
    return (np.float32(b) + np.float32(c) * img).astype(np.float32)


def simulate_bias_field(img: np.ndarray, rng: np.random.Generator,
                        order: int = 4, magnitude: float = 0.3) -> np.ndarray:
    """Multiply by exp(P), P a random polynomial scaled to max|P| == magnitude."""
    exponents = polynomial_exponents(order)
    coeffs = rng.uniform(-1.0, 1.0, size=len(exponents))
    if magnitude == 0.0:
        return img
    field = evaluate_polynomial(coeffs, exponents, img.shape)
    peak = np.abs(field).max()
    if peak > 0:
        field *= magnitude / peak
    return (img * np.exp(field)).astype(np.float32)


# --- MRI artifacts -------------------------------------------------------

def add_ghosting(img: np.ndarray, rng: np.random.Generator, n_ghosts: int = 4,
                 axis: int = 0, intensity: float = 0.5) -> np.ndarray:
    """Attenuate every n-th k-space line along `axis` (DC line kept)."""
    if intensity == 0.0 or n_ghosts < 1:
        return img
    spectrum = np.fft.fft(img, axis=axis)
    mult = np.ones(img.shape[axis])
    mult[::n_ghosts] = 1.0 - intensity
    mult[0] = 1.0
    shape = [1, 1, 1]
    shape[axis] = img.shape[axis]
    out = np.fft.ifft(spectrum * mult.reshape(shape), axis=axis)
    return np.real(out).astype(np.float32)


def add_noise(img: np.ndarray, rng: np.random.Generator, std: float = 0.05) -> np.ndarray:
    """Add i.i.d. Gaussian noise; `std` is relative to the image std."""
    if std == 0.0:
        return img
    sigma = std * float(img.std())
    return (img + rng.normal(0.0, sigma, size=img.shape)).astype(np.float32)


def blur(img: np.ndarray, rng: np.random.Generator, sigma: float = 0.75) -> np.ndarray:
    """Separable Gaussian blur (normalized kernel)."""
    if sigma == 0.0:
        return img
    return gaussian_filter(img.astype(np.float32), sigma=sigma)


def motion(img: np.ndarray, rng: np.random.Generator, severity: float = 2.0) -> np.ndarray:
    """Two rigid displacement events composited in k-space.

    The k-space lines along one axis are split into three frequency bands
    (by distance from the spectrum center, so conjugate symmetry survives
    and the result is exactly real-valued); the innermost band keeps the
    original, the outer two take phase-ramp-shifted copies with max shift
    `severity` voxels.  Per-line energy is preserved exactly.
    """
    if severity == 0.0:
        return img
    axis = int(rng.integers(0, 3))
    shifts = rng.uniform(-severity, severity, size=(2, 3))
    n = img.shape[axis]
    radii = np.sort(rng.uniform(1.0, n / 2.0, size=2))
    spectrum = np.fft.fftn(img)
    freqs = []
    for a in range(3):
        shape = [1, 1, 1]
        shape[a] = img.shape[a]
        freqs.append(np.fft.fftfreq(img.shape[a]).reshape(shape))

    dist = np.abs(np.fft.fftfreq(n)) * n   # distance from the center line
    composite = np.array(spectrum)
    for e, shift in enumerate(shifts):
        if e == 0:
            band = (dist >= radii[0]) & (dist < radii[1])
        else:
            band = dist >= radii[1]
        lines = np.flatnonzero(band)
        if lines.size == 0:
            continue
        phase = np.exp(-2j * np.pi * (freqs[0] * shift[0] + freqs[1] * shift[1]
                                      + freqs[2] * shift[2]))
        shifted = spectrum * phase
        sel = [slice(None)] * 3
        sel[axis] = lines
        composite[tuple(sel)] = shifted[tuple(sel)]
    return np.real(np.fft.ifftn(composite)).astype(np.float32)


# --- slice merge ---------------------------------------------------------

def slice_merge(img_stack: np.ndarray, mask_stack: np.ndarray,
                rng: np.random.Generator, alpha_max: float = 0.5, axis: int = 0,
                renormalize: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Blend neighboring slices into interior slices with one shared alpha.

    Interior slice i becomes (1-a)*x[i] + a*(x[i+1] + x[i-1]); boundary
    slices are unchanged.  The weights deliberately sum to 1+a; pass
    `renormalize=True` to divide interior slices by (1+a).
    """
    n = img_stack.shape[axis]
    if n < 3:
        raise TooFewSlices(f"need >= 3 slices along axis {axis}, got {n}")
    alpha = float(rng.uniform(0.0, alpha_max))

    def merge(stack: np.ndarray) -> np.ndarray:
        s = np.moveaxis(np.asarray(stack, dtype=np.float32), axis, 0)
        out = s.copy()
        out[1:-1] = (1.0 - alpha) * s[1:-1] + alpha * (s[2:] + s[:-2])
        if renormalize:
            out[1:-1] /= (1.0 + alpha)
        return np.moveaxis(out, 0, axis)

    return merge(img_stack), merge(mask_stack)


# --- full chain ----------------------------------------------------------

def augment_pair(img: np.ndarray, mask: np.ndarray, rng: np.random.Generator,
                 cfg: AugmentConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Apply the whole gated transform chain to one (image, mask) pair."""
    cfg = cfg or AugmentConfig()
    img, mask = spatial_transform(img, mask, rng, cfg)
    img = intensity_transform(img, rng, cfg)
    if rng.random() < cfg.p_bias:
        img = simulate_bias_field(img, rng, cfg.bias_order,
                                  rng.uniform(0.0, cfg.bias_magnitude))
    if rng.random() < cfg.p_ghosting:
        img = add_ghosting(img, rng,
                           int(rng.integers(cfg.ghost_count_range[0],
                                            cfg.ghost_count_range[1] + 1)),
                           int(rng.integers(0, 3)),
                           rng.uniform(*cfg.ghost_intensity_range))
    if rng.random() < cfg.p_motion:
        img = motion(img, rng, rng.uniform(*cfg.motion_severity_range))
    if rng.random() < cfg.p_noise:
        img = add_noise(img, rng, rng.uniform(*cfg.noise_std_range))
    if rng.random() < cfg.p_blur:
        img = blur(img, rng, rng.uniform(*cfg.blur_sigma_range))
    return img, mask
