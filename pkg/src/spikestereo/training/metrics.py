"""PSNR and SSIM on images in [0, 1] with the channel axis first."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d

PSNR_CAP = 100.0


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """``10 log10(1 / MSE)``; identical inputs report :data:`PSNR_CAP`."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    out = correlate1d(img, win, axis=-1, mode="constant")
    out = correlate1d(out, win, axis=-2, mode="constant")
    r = len(win) // 2
    return out[..., r : img.shape[-2] - r, r : img.shape[-1] - r]


def ssim(a: np.ndarray, b: np.ndarray, win_size: int = 11, sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM over 'valid' Gaussian windows, averaged over channels.

    Accepts ``[H, W]`` or ``[C, H, W]`` arrays.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[None], b[None]
    if min(a.shape[-2:]) < win_size:
        raise ValueError(f"image smaller than the {win_size}x{win_size} SSIM window")
    win = gaussian_window(win_size, sigma)
    c1, c2 = (k1 * 1.0) ** 2, (k2 * 1.0) ** 2
    mu_a, mu_b = _filter_valid(a, win), _filter_valid(b, win)
    saa = _filter_valid(a * a, win) - mu_a**2
    sbb = _filter_valid(b * b, win) - mu_b**2
    sab = _filter_valid(a * b, win) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (saa + sbb + c2)
    per_channel = (num / den).reshape(a.shape[0], -1).mean(axis=1)
    return float(per_channel.mean())


def stereo_scores(pred_left, pred_right, gt_left, gt_right) -> dict:
    """PSNR/SSIM per view and their left/right average."""
    pl, pr = psnr(pred_left, gt_left), psnr(pred_right, gt_right)
    sl, sr = ssim(pred_left, gt_left), ssim(pred_right, gt_right)
    return {
        "psnr_left": pl,
        "psnr_right": pr,
        "psnr": (pl + pr) / 2,
        "ssim_left": sl,
        "ssim_right": sr,
        "ssim": (sl + sr) / 2,
    }
