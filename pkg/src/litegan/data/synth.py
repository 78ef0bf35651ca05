"""Synthetic paired confocal/STED/deconvolved-STED data.

Each sample is a smooth filament curve with a Gaussian cross-section
(cilium-like) rendered as ground truth, observed through a wide confocal
PSF and a narrow STED PSF with additive noise. The deconvolved target is
produced by Richardson-Lucy deconvolution of the STED image. Optional
degradations (photobleaching, structured artifacts) emulate low-quality
experiments for the diagnostic workflow.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from .deconv import blur, gaussian_psf, rl_deconvolve

# fixed intensity scale from the float [0, 1] render domain to 16-bit storage
INTENSITY_SCALE = 50000.0
STRUCT_SIGMA = 1.1  # filament cross-section width in pixels


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int
    image_size: int = 128
    psf_sigma_confocal: float = 3.0
    psf_sigma_sted: float = 1.0
    noise_level: float = 0.01
    rl_iterations: int = 20
    degrade: Optional[str] = None  # "photobleach:FACTOR" | "artifact:STRENGTH"
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if not self.psf_sigma_confocal > self.psf_sigma_sted > 0:
            raise ValueError("need psf_sigma_confocal > psf_sigma_sted > 0")
        if self.degrade is not None:
            kind, _, value = self.degrade.partition(":")
            if kind not in ("photobleach", "artifact"):
                raise ValueError(f"unknown degradation {self.degrade!r}")
            float(value)


@dataclass
class SampleTriplet:
    """One field of view across modalities, 16-bit grayscale."""

    id: str
    confocal: np.ndarray
    sted: np.ndarray
    dsted: np.ndarray
    truth: np.ndarray
    quality: str = "high"


def _render_filaments(rng: np.random.Generator, size: int) -> np.ndarray:
    """Ground-truth image: 1-2 smooth filament curves, peak intensity ~0.9."""
    canvas = np.zeros((size, size), dtype=np.float64)
    n_filaments = int(rng.integers(1, 3))
    for _ in range(n_filaments):
        length = rng.uniform(0.3 * size, 0.7 * size)
        n_steps = int(length / 0.5)
        theta = rng.uniform(0, 2 * np.pi)
        curvature = rng.normal(0.0, 0.02)
        x = rng.uniform(0.3 * size, 0.7 * size)
        y = rng.uniform(0.3 * size, 0.7 * size)
        amp = rng.uniform(0.7, 1.0)
        wobble = rng.normal(0.0, 0.01, size=n_steps)
        for i in range(n_steps):
            theta += curvature + wobble[i]
            x += 0.5 * np.cos(theta)
            y += 0.5 * np.sin(theta)
            if not (1 <= x < size - 2 and 1 <= y < size - 2):
                break
            # bilinear splat; slow intensity variation along the arc
            a = amp * (0.8 + 0.2 * np.sin(2 * np.pi * i / max(n_steps, 1)))
            x0, y0 = int(x), int(y)
            fx, fy = x - x0, y - y0
            canvas[y0, x0] += a * (1 - fx) * (1 - fy)
            canvas[y0, x0 + 1] += a * fx * (1 - fy)
            canvas[y0 + 1, x0] += a * (1 - fx) * fy
            canvas[y0 + 1, x0 + 1] += a * fx * fy
    canvas = gaussian_filter(canvas, STRUCT_SIGMA, mode="constant")
    peak = canvas.max()
    if peak > 0:
        canvas *= 0.9 / peak
    return canvas


def _to_uint16(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img * INTENSITY_SCALE), 0, 65535).astype(np.uint16)


def _observe(truth: np.ndarray, sigma: float, noise: float,
             rng: np.random.Generator) -> np.ndarray:
    psf = gaussian_psf(sigma)
    observed = blur(truth, psf)
    if noise > 0:
        observed = observed + rng.normal(0.0, noise, truth.shape)
    return np.maximum(observed, 0.0)


def _apply_degradation(img: np.ndarray, degrade: str, noise: float,
                       rng: np.random.Generator, size: int) -> np.ndarray:
    kind, _, value = degrade.partition(":")
    value = float(value)
    if kind == "photobleach":
        # signal fades, the noise floor does not
        out = img * value
        out = out + np.abs(rng.normal(0.0, max(noise, 1e-3), img.shape))
        return np.maximum(out, 0.0)
    # structured artifact: diagonal stripes plus a few bright blobs
    yy, xx = np.mgrid[0:size, 0:size]
    phase = rng.uniform(0, 2 * np.pi)
    stripes = 0.5 * value * (1 + np.sin(2 * np.pi * (xx + yy) / 16.0 + phase))
    out = img + stripes * img.max()
    for _ in range(int(rng.integers(2, 5))):
        cy, cx = rng.uniform(10, size - 10, 2)
        blob = np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * 3.0 ** 2)))
        out = out + value * img.max() * blob
    return np.maximum(out, 0.0)


def synth_generate(cfg: SynthConfig) -> List[SampleTriplet]:
    """Generate a deterministic synthetic dataset for the given config."""
    samples = []
    sted_psf = gaussian_psf(cfg.psf_sigma_sted)
    for i in range(cfg.n_samples):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, i]))
        truth = _render_filaments(rng, cfg.image_size)
        sted = _observe(truth, cfg.psf_sigma_sted, cfg.noise_level, rng)
        confocal = _observe(truth, cfg.psf_sigma_confocal, cfg.noise_level, rng)
        dsted = np.clip(rl_deconvolve(sted, sted_psf, cfg.rl_iterations), 0.0, 65535 / INTENSITY_SCALE)
        quality = "high"
        if cfg.degrade is not None:
            sted = _apply_degradation(sted, cfg.degrade, cfg.noise_level, rng, cfg.image_size)
            dsted = _apply_degradation(dsted, cfg.degrade, cfg.noise_level, rng, cfg.image_size)
            quality = "low"
        samples.append(SampleTriplet(
            id=f"s{i:04d}",
            confocal=_to_uint16(confocal),
            sted=_to_uint16(sted),
            dsted=_to_uint16(dsted),
            truth=_to_uint16(truth),
            quality=quality,
        ))
    return samples


def two_filament_phantom(separation: float = 6.0, image_size: int = 128,
                         psf_sigma_confocal: float = 3.0, psf_sigma_sted: float = 1.0,
                         noise_level: float = 0.0, seed: int = 0) -> Dict[str, np.ndarray]:
    """Two parallel horizontal filaments ``separation`` pixels apart.

    Returns float64 images in [0, ~1] plus the vertical profile endpoints
    (x, y) that cross both filaments at the image center.
    """
    rng = np.random.default_rng(seed)
    size = image_size
    canvas = np.zeros((size, size), dtype=np.float64)
    mid = size / 2.0
    for offset in (-separation / 2.0, separation / 2.0):
        y = mid + offset
        y0 = int(np.floor(y))
        fy = y - y0
        xs = np.arange(int(0.2 * size), int(0.8 * size))
        canvas[y0, xs] += (1 - fy)
        canvas[y0 + 1, xs] += fy
    truth = gaussian_filter(canvas, 1.0, mode="constant")
    truth *= 0.9 / truth.max()
    sted = _observe(truth, psf_sigma_sted, noise_level, rng)
    confocal = _observe(truth, psf_sigma_confocal, noise_level, rng)
    dsted = np.clip(rl_deconvolve(sted, gaussian_psf(psf_sigma_sted), 20), 0.0,
                    65535 / INTENSITY_SCALE)
    return {
        "truth": truth,
        "confocal": confocal,
        "sted": sted,
        "dsted": dsted,
        "profile_p0": (mid, mid - 4 * separation),
        "profile_p1": (mid, mid + 4 * separation),
    }
