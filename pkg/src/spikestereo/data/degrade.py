"""Synthetic degradations for the four restoration tasks.

Rain and raindrop layers are drawn once on a canvas wider than the image and
sampled for each view through that view's disparity field, so the right-view
weather mask is the left-view mask warped by the scene disparity. Sensor-like
noise is drawn independently per view.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter

from ..resample import resize_bicubic
from .scene import Scene

KINDS = ("rainstreak", "raindrop", "lowlight", "downsample")

DEFAULTS = {
    "rainstreak": {"count": 40, "length": [6.0, 14.0], "angle": [70.0, 110.0], "intensity": [0.4, 0.8], "width": 0.8},
    "raindrop": {"count": 16, "radius": [3.0, 8.0], "blur": 3.0, "opacity": 0.9, "brighten": 0.2},
    "lowlight": {"gamma": [2.0, 5.0], "gain": [0.1, 0.5], "noise_sigma": 0.02},
    "downsample": {"scale": 4, "antialias": True},
}


def _range(v) -> tuple[float, float]:
    if isinstance(v, (list, tuple)):
        lo, hi = float(v[0]), float(v[1])
    else:
        lo = hi = float(v)
    if hi < lo:
        raise ValueError(f"invalid range {v}")
    return lo, hi


@dataclass
class DegradationSpec:
    """Degradation kind, seed and parameter overrides.

    ``params`` overrides :data:`DEFAULTS` for the kind. Ranged parameters
    accept either a number or ``[lo, hi]``; a value is drawn per sample.
    """

    kind: str = "raindrop"
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown degradation {self.kind!r}; expected one of {KINDS}")
        unknown = set(self.params) - set(DEFAULTS[self.kind])
        if unknown:
            raise ValueError(f"unknown {self.kind} parameters: {sorted(unknown)}")
        p = self.resolved()
        if self.kind == "rainstreak":
            lo, hi = _range(p["angle"])
            if lo < 70 or hi > 110:
                raise ValueError("streak angle must lie in [70, 110] degrees")
        if self.kind == "lowlight":
            if _range(p["gamma"])[0] <= 0:
                raise ValueError("gamma must be positive")
            glo, ghi = _range(p["gain"])
            if glo <= 0 or ghi > 1:
                raise ValueError("gain must lie in (0, 1]")
        if self.kind == "downsample" and int(p["scale"]) < 1:
            raise ValueError("scale must be >= 1")

    def resolved(self) -> dict:
        return {**DEFAULTS[self.kind], **self.params}

    def to_dict(self) -> dict:
        return {"kind": self.kind, "seed": self.seed, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "DegradationSpec":
        return cls(d["kind"], d.get("seed", 0), dict(d.get("params", {})))


@dataclass
class Degraded:
    left: np.ndarray
    right: np.ndarray
    # weather opacity per view (None for photometric/resampling degradations)
    mask_left: Optional[np.ndarray] = None
    mask_right: Optional[np.ndarray] = None


def warp_to_views(canvas: np.ndarray, disp_right: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample a ``[H, W + D]`` canvas for both views.

    The canvas is in left-view coordinates; right-view pixel ``x`` reads
    canvas column ``x + disp_right[y, x]``.
    """
    H, W = disp_right.shape
    rows = np.arange(H)[:, None]
    cols = np.arange(W)[None, :]
    return canvas[:, :W].copy(), canvas[rows, cols + disp_right]


def streak_canvas(rng: np.random.Generator, h: int, w: int, p: dict) -> np.ndarray:
    """Anti-aliased line segments with per-streak length, angle and intensity."""
    canvas = np.zeros((h, w))
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    for _ in range(int(p["count"])):
        length = rng.uniform(*_range(p["length"]))
        theta = np.deg2rad(rng.uniform(*_range(p["angle"])))
        inten = rng.uniform(*_range(p["intensity"]))
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        dy, dx = np.sin(theta), np.cos(theta)
        # distance from each pixel to the segment centred at (cy, cx)
        t = np.clip((yy - cy) * dy + (xx - cx) * dx, -length / 2, length / 2)
        dist = np.hypot(yy - (cy + t * dy), xx - (cx + t * dx))
        canvas = np.maximum(canvas, inten * np.clip(1 - dist / p["width"], 0, 1))
    return canvas


def drop_canvas(rng: np.random.Generator, h: int, w: int, p: dict) -> np.ndarray:
    """Opacity of Gaussian drop blobs, capped at ``opacity``."""
    alpha = np.zeros((h, w))
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    for _ in range(int(p["count"])):
        r = rng.uniform(*_range(p["radius"]))
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        alpha += np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * (r / 2) ** 2))
    return np.clip(alpha, 0, 1) * float(p["opacity"])


def degrade(scene: Scene, spec: DegradationSpec) -> Degraded:
    """Apply ``spec`` to both views of ``scene``; deterministic in ``spec.seed``.

    Low-light follows ``out = clip((gain * in) ** gamma + noise, 0, 1)``.
    Downsampling returns views of size ``(H // scale, W // scale)``.
    """
    rng = np.random.default_rng(spec.seed)
    p = spec.resolved()
    left, right = scene.left, scene.right
    H, W = left.shape[-2:]
    D = int(max(scene.disparity_left.max(initial=0), scene.disparity_right.max(initial=0)))

    if spec.kind == "rainstreak":
        canvas = streak_canvas(rng, H, W + D, p)
        ml, mr = warp_to_views(canvas, scene.disparity_right)
        # screen blend keeps values in [0, 1]
        out = [1 - (1 - v) * (1 - m) for v, m in ((left, ml), (right, mr))]
        return Degraded(out[0], out[1], ml, mr)

    if spec.kind == "raindrop":
        canvas = drop_canvas(rng, H, W + D, p)
        ml, mr = warp_to_views(canvas, scene.disparity_right)
        out = []
        for v, m in ((left, ml), (right, mr)):
            seen = gaussian_filter(v, sigma=(0, p["blur"], p["blur"]), mode="nearest")
            seen = np.clip(seen + p["brighten"], 0, 1)
            out.append((1 - m) * v + m * seen)
        return Degraded(out[0], out[1], ml, mr)

    if spec.kind == "lowlight":
        gamma = rng.uniform(*_range(p["gamma"]))
        gain = rng.uniform(*_range(p["gain"]))
        sigma = float(p["noise_sigma"])
        out = []
        for v in (left, right):
            dark = (gain * v) ** gamma
            if sigma > 0:
                dark = dark + rng.normal(0.0, sigma, v.shape)
            out.append(np.clip(dark, 0, 1))
        return Degraded(out[0], out[1])

    s = int(p["scale"])
    if s == 1:
        return Degraded(left.copy(), right.copy())
    h, w = H // s, W // s
    out = [np.clip(resize_bicubic(v[..., : h * s, : w * s], h, w, antialias=bool(p["antialias"])), 0, 1) for v in (left, right)]
    return Degraded(out[0], out[1])
