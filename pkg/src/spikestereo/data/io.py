"""8-bit RGB PNG reading and writing for ``[3, H, W]`` float images in [0, 1]."""

from __future__ import annotations

import os

import numpy as np
from PIL import Image, UnidentifiedImageError


class DecodeError(IOError):
    """The file exists but is not a readable image."""


def to_uint8(image: np.ndarray) -> np.ndarray:
    """Quantize with round-half-up: ``floor(255 * x + 0.5)``."""
    x = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    return np.floor(x * 255.0 + 0.5).astype(np.uint8)


def save_png(path, image: np.ndarray) -> None:
    """Write a ``[3, H, W]`` (or ``[H, W]``) image in [0, 1] as an 8-bit PNG."""
    arr = np.asarray(image)
    if arr.ndim == 3:
        if arr.shape[0] not in (1, 3):
            raise ValueError(f"expected [3, H, W] image, got shape {arr.shape}")
        arr = arr[0] if arr.shape[0] == 1 else np.transpose(arr, (1, 2, 0))
    elif arr.ndim != 2:
        raise ValueError(f"expected [3, H, W] image, got shape {arr.shape}")
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
    # fixed compression settings keep the bytes reproducible
    Image.fromarray(to_uint8(arr)).save(path, format="PNG", optimize=False, compress_level=6)


def load_png(path, dtype=np.float32) -> np.ndarray:
    """Read an image as ``[3, H, W]`` in [0, 1]; grayscale is copied to all channels."""
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("I;16", "I;16B", "I"):
                arr = np.asarray(im, dtype=np.float64) / 65535.0
                arr = np.repeat(arr[None], 3, axis=0)
                return arr.astype(dtype)
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float64) / 255.0
    except FileNotFoundError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"cannot decode image {os.fspath(path)!r}: {exc}") from exc
    return np.transpose(arr, (2, 0, 1)).astype(dtype)
