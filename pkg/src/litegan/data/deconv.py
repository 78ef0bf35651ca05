"""Richardson-Lucy deconvolution with periodic boundary handling.

Used only to synthesize deconvolved-STED-style targets; periodic (FFT)
convolution keeps total flux exactly conserved, which the tests rely on.
"""

from __future__ import annotations

import numpy as np

_EPS = 1e-12


def gaussian_psf(sigma: float, size: int | None = None) -> np.ndarray:
    """Normalized 2-D Gaussian kernel; default support is ~6 sigma, odd."""
    if sigma <= 0:
        raise ValueError("gaussian_psf: sigma must be > 0")
    if size is None:
        size = 2 * int(np.ceil(3 * sigma)) + 1
    if size % 2 == 0:
        raise ValueError("gaussian_psf: size must be odd")
    half = size // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    k1 = np.exp(-(x ** 2) / (2 * sigma ** 2))
    kernel = np.outer(k1, k1)
    return kernel / kernel.sum()


def _periodic_convolve(img: np.ndarray, psf_fft: np.ndarray) -> np.ndarray:
    return np.real(np.fft.ifft2(np.fft.fft2(img) * psf_fft))


def _psf_fft(psf: np.ndarray, shape) -> np.ndarray:
    padded = np.zeros(shape, dtype=np.float64)
    kh, kw = psf.shape
    padded[:kh, :kw] = psf
    # center the kernel on (0, 0) for a symmetric periodic convolution
    padded = np.roll(padded, (-(kh // 2), -(kw // 2)), axis=(0, 1))
    return np.fft.fft2(padded)


def blur(img: np.ndarray, psf: np.ndarray) -> np.ndarray:
    """Periodic convolution of an image with a PSF."""
    return _periodic_convolve(np.asarray(img, dtype=np.float64), _psf_fft(psf, img.shape))


def rl_deconvolve(img: np.ndarray, psf: np.ndarray, iterations: int) -> np.ndarray:
    """Standard multiplicative Richardson-Lucy iteration.

    The estimate starts at the observed image; output is non-negative and
    conserves total intensity under the periodic convolution model.
    """
    if iterations < 1:
        raise ValueError("rl_deconvolve: iterations must be >= 1")
    psf = np.asarray(psf, dtype=np.float64)
    if (psf < 0).any() or not np.isclose(psf.sum(), 1.0, atol=1e-8):
        raise ValueError("rl_deconvolve: psf must be non-negative and sum to 1")
    observed = np.asarray(img, dtype=np.float64)
    if observed.max() <= 0:
        return observed.copy()
    otf = _psf_fft(psf, observed.shape)
    otf_conj = np.conj(otf)
    estimate = observed.copy()
    for _ in range(iterations):
        reblurred = _periodic_convolve(estimate, otf)
        ratio = observed / np.maximum(reblurred, _EPS)
        estimate = estimate * np.maximum(
            np.real(np.fft.ifft2(np.fft.fft2(ratio) * otf_conj)), 0.0)
    return np.maximum(estimate, 0.0)
