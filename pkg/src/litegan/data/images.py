"""Grayscale 8/16-bit image I/O backed by Pillow."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def max_value_for(dtype) -> int:
    dtype = np.dtype(dtype)
    if dtype == np.uint8:
        return 255
    if dtype == np.uint16:
        return 65535
    raise ValueError(f"unsupported image dtype {dtype}")


def load_image(path) -> np.ndarray:
    """Load a grayscale PNG as uint8 or uint16."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.mode in ("I;16", "I;16B", "I"):
                arr = np.asarray(im, dtype=np.uint16)
            elif im.mode == "L":
                arr = np.asarray(im, dtype=np.uint8)
            else:
                arr = np.asarray(im.convert("L"), dtype=np.uint8)
    except Exception as exc:
        raise IOError(f"cannot read image {path}: {exc}") from exc
    if arr.ndim != 2:
        raise IOError(f"image {path} is not single-channel")
    return arr


def save_image(path, arr: np.ndarray) -> None:
    path = Path(path)
    arr = np.asarray(arr)
    if arr.dtype == np.uint8 or arr.dtype == np.uint16:
        im = Image.fromarray(arr)
    else:
        raise ValueError(f"save_image expects uint8/uint16, got {arr.dtype}")
    im.save(path, format="PNG")
