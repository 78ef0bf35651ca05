"""Preprocessing chain: contrast stretch, mutual-information registration,
padding to the network size, intensity normalization, and dihedral
augmentation.

The chain order is contrast_stretch -> register_translation -> pad_to_square
-> normalize_to_net -> augment. Registration searches integer translations
only; synthetic data never needs sub-pixel or rotational correction.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np

from .images import max_value_for


def contrast_stretch(img: np.ndarray, low_pct: float = 1.0,
                     high_pct: float = 99.0) -> np.ndarray:
    """Linearly remap the [low, high] percentile range to the full range."""
    if not 0 <= low_pct < high_pct <= 100:
        raise ValueError("percentiles must satisfy 0 <= low < high <= 100")
    max_val = max_value_for(img.dtype)
    lo, hi = np.percentile(img, [low_pct, high_pct])
    if hi <= lo:
        return img.copy()
    stretched = (img.astype(np.float64) - lo) * (max_val / (hi - lo))
    return np.clip(np.rint(stretched), 0, max_val).astype(img.dtype)


def _mutual_information(a: np.ndarray, b: np.ndarray, bins: int) -> float:
    joint, _, _ = np.histogram2d(a.ravel(), b.ravel(), bins=bins)
    p = joint / joint.sum()
    px = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / (px @ py)[mask])))


def register_translation(reference: np.ndarray, moving: np.ndarray,
                         radius: int = 8, bins: int = 64) -> Tuple[int, int]:
    """Integer shift (dx, dy) of ``moving`` relative to ``reference``.

    Maximizes the mutual information of the joint intensity histogram over
    the overlap region; a return of (dx, dy) means the moving image content
    sits dx columns right and dy rows down of the reference, so shifting
    it back by (-dx, -dy) aligns the pair. Ties break toward the smallest
    |dx|+|dy|, then lexicographically.
    """
    if reference.shape != moving.shape:
        raise ValueError("register_translation: images must share dimensions")
    if radius > 16:
        raise ValueError("register_translation: radius must be <= 16")
    h, w = reference.shape
    if (h - radius) * (w - radius) < 0.5 * h * w:
        raise ValueError("register_translation: overlap smaller than 50% of the image")
    best = None
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            # moving content at (r + dy, c + dx) corresponds to reference (r, c)
            ref = reference[max(0, -dy):h - max(0, dy), max(0, -dx):w - max(0, dx)]
            mov = moving[max(0, dy):h + min(dy, 0), max(0, dx):w + min(dx, 0)]
            mi = _mutual_information(ref, mov, bins)
            key = (-mi, abs(dx) + abs(dy), dx, dy)
            if best is None or key < best[0]:
                best = (key, (dx, dy))
    return best[1]


def shift_image(img: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Translate by (dx, dy) (columns right, rows down), zero-filled."""
    out = np.zeros_like(img)
    h, w = img.shape
    ys_src = slice(max(0, -dy), h - max(0, dy))
    xs_src = slice(max(0, -dx), w - max(0, dx))
    ys_dst = slice(max(0, dy), h - max(0, -dy))
    xs_dst = slice(max(0, dx), w - max(0, -dx))
    out[ys_dst, xs_dst] = img[ys_src, xs_src]
    return out


def pad_to_square(img: np.ndarray, size: int = 128) -> np.ndarray:
    """Center the content in a size x size frame: crop oversize dims, pad rest."""
    h, w = img.shape
    if h > size:
        top = (h - size) // 2
        img = img[top:top + size, :]
        h = size
    if w > size:
        left = (w - size) // 2
        img = img[:, left:left + size]
        w = size
    out = np.zeros((size, size), dtype=img.dtype)
    top = (size - h) // 2
    left = (size - w) // 2
    out[top:top + h, left:left + w] = img
    return out


def normalize_to_net(img: np.ndarray) -> Tuple[np.ndarray, float, float]:
    """Per-image min-max map to [-1, 1]; returns (array, lo, hi) so the map
    can be inverted. A constant image maps to all -1."""
    lo = float(img.min())
    hi = float(img.max())
    arr = img.astype(np.float32)
    if hi <= lo:
        return np.full_like(arr, -1.0, dtype=np.float32), lo, hi
    return ((arr - lo) / (hi - lo) * 2.0 - 1.0).astype(np.float32), lo, hi


def denormalize_from_net(arr: np.ndarray, lo: float, hi: float, dtype=np.uint8) -> np.ndarray:
    """Invert normalize_to_net back to the original intensity range."""
    max_val = max_value_for(dtype)
    if hi <= lo:
        values = np.full(arr.shape, lo, dtype=np.float64)
    else:
        values = (arr.astype(np.float64) + 1.0) / 2.0 * (hi - lo) + lo
    return np.clip(np.rint(values), 0, max_val).astype(dtype)


def net_to_intensity(arr: np.ndarray, dtype=np.uint8) -> np.ndarray:
    """Fixed affine map from the network domain [-1, 1] to [0, MAX].

    Used when comparing network-domain images in a common intensity frame
    (generated output vs. normalized target).
    """
    max_val = max_value_for(dtype)
    values = (np.asarray(arr, dtype=np.float64) + 1.0) / 2.0 * max_val
    return np.clip(np.rint(values), 0, max_val).astype(dtype)


def apply_dihedral(img: np.ndarray, k: int) -> np.ndarray:
    """Element k of the dihedral group of the square: rotation by 90*(k%4)
    degrees, plus a horizontal flip when k >= 4."""
    if not 0 <= k < 8:
        raise ValueError("dihedral index must be in 0..7")
    if img.shape[-2] != img.shape[-1]:
        raise ValueError("dihedral augmentation needs square images")
    out = np.rot90(img, k % 4, axes=(-2, -1))
    if k >= 4:
        out = np.flip(out, axis=-1)
    return np.ascontiguousarray(out)


def augment(pair: Tuple[np.ndarray, np.ndarray],
            rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Apply one random dihedral transform identically to both images."""
    a, b = pair
    if a.shape != b.shape:
        raise ValueError("augment: paired images must share shape")
    k = int(rng.integers(8))
    return apply_dihedral(a, k), apply_dihedral(b, k)


def preprocess_image(img: np.ndarray, size: int = 128, low_pct: float = 1.0,
                     high_pct: float = 99.0) -> np.ndarray:
    """Single-image chain: contrast stretch then pad/crop to the network size."""
    return pad_to_square(contrast_stretch(img, low_pct, high_pct), size)
