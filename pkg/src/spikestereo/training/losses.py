"""Pixel and feature-space reconstruction losses for stereo pairs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..blocks import StereoPair


def _views(x) -> tuple[Tensor, Tensor]:
    if isinstance(x, StereoPair):
        return x.left, x.right
    left, right = x
    return (left if isinstance(left, Tensor) else Tensor(left)), (right if isinstance(right, Tensor) else Tensor(right))


def l1_loss(pred, target) -> Tensor:
    """Mean absolute error of the left view plus that of the right view."""
    pl, pr = _views(pred)
    tl, tr = _views(target)
    if pl.shape != tl.shape or pr.shape != tr.shape:
        raise ad.ShapeError(f"l1_loss shape mismatch: {pl.shape} vs {tl.shape}")
    return ad.abs(pl - tl).mean() + ad.abs(pr - tr).mean()


@dataclass
class LossConfig:
    """Perceptual-loss taps: one weight per feature level."""

    lambda_k: Sequence[float] = (1.0, 1.0, 1.0)
    perceptual_layers: Sequence[int] = (0, 1, 2)

    def __post_init__(self):
        if any(lam < 0 for lam in self.lambda_k):
            raise ValueError("lambda_k must be nonnegative")


class FeaturePyramid:
    """Frozen, seeded random conv pyramid producing features at strides 1, 2 and 4.

    Each level is a 3x3 convolution followed by ReLU. The filters are paired
    with their negation so the rectified features keep sign information.
    """

    def __init__(self, widths: Sequence[int] = (8, 16, 32), seed: int = 1234, dtype=np.float32, layers=None):
        if layers is not None:
            self.layers = [(Tensor(np.asarray(w, dtype=dtype)), s) for w, s in layers]
            return
        rng = np.random.default_rng(seed)
        self.layers = []
        cin = 3
        for i, w in enumerate(widths):
            half = rng.normal(0.0, np.sqrt(2.0 / (cin * 9)), size=(w // 2, cin, 3, 3))
            weight = np.concatenate([half, -half], axis=0).astype(dtype)
            self.layers.append((Tensor(weight), 1 if i == 0 else 2))
            cin = w

    @classmethod
    def identity(cls, dtype=np.float64) -> "FeaturePyramid":
        """Single 1x1 identity tap (reduces the perceptual loss to plain L1)."""
        return cls(layers=[(np.eye(3).reshape(3, 3, 1, 1), 1)], dtype=dtype)

    def __call__(self, images: Tensor) -> list[Tensor]:
        feats = []
        x = images
        for weight, stride in self.layers:
            k = weight.shape[-1]
            x = ad.relu(ad.conv2d(x, weight, stride=stride, padding=k // 2))
            feats.append(x)
        return feats


def perceptual_loss(pred, target, cfg: Optional[LossConfig] = None, extractor: Optional[FeaturePyramid] = None) -> Tensor:
    """``sum_k lambda_k (|phi_k(pred_l) - phi_k(tgt_l)|_1 + |phi_k(pred_r) - phi_k(tgt_r)|_1)``.

    Each distance is the mean absolute feature difference.
    """
    cfg = cfg or LossConfig()
    extractor = extractor or FeaturePyramid()
    pl, pr = _views(pred)
    tl, tr = _views(target)
    n = pl.shape[0] if pl.ndim == 4 else 1
    to4 = lambda t: t if t.ndim == 4 else t.reshape((1,) + t.shape)  # noqa: E731
    pred_feats = extractor(ad.concat([to4(pl), to4(pr)], axis=0))
    with ad.no_grad():
        tgt_feats = extractor(ad.concat([to4(tl), to4(tr)], axis=0))
    total = None
    for k, lam in zip(cfg.perceptual_layers, cfg.lambda_k):
        if k >= len(pred_feats):
            continue
        diff = ad.abs(pred_feats[k] - tgt_feats[k])
        term = diff[:n].mean() + diff[n:].mean()
        term = term * float(lam)
        total = term if total is None else total + term
    if total is None:
        return Tensor(np.zeros((), dtype=pl.dtype))
    return total
