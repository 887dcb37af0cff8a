"""Procedural stereo scenes built from horizontally shifted depth layers.

Each layer is rendered on a canvas ``disparity_range`` pixels wider than the
image. The left view samples canvas column ``x`` and the right view samples
column ``x + d`` for a layer with disparity ``d``, so both views are fully
covered and need no hole filling.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import zoom


@dataclass
class SceneSpec:
    """Parameters of one synthetic stereo scene.

    Attributes:
        seed: RNG seed; the scene is a pure function of the spec.
        size: ``(H, W)`` of each view.
        disparity_range: largest horizontal shift between views in pixels.
        layers: number of depth layers (background included).
        octaves: octaves of value noise in each texture.
        shapes: rectangles / gradient patches per foreground layer.
        sensor_noise: std of independent per-view Gaussian noise.
    """

    seed: int = 0
    size: tuple = (64, 64)
    disparity_range: int = 6
    layers: int = 3
    octaves: int = 4
    shapes: int = 3
    sensor_noise: float = 0.0

    def __post_init__(self):
        self.size = (int(self.size[0]), int(self.size[1]))
        H, W = self.size
        if H < 1 or W < 1:
            raise ValueError(f"invalid scene size {self.size}")
        if not 0 <= self.disparity_range < W / 4:
            raise ValueError(f"disparity_range must be in [0, W/4), got {self.disparity_range} for W={W}")
        if not 1 <= self.layers <= 3:
            raise ValueError("layers must be 1, 2 or 3")
        if self.sensor_noise < 0:
            raise ValueError("sensor_noise must be nonnegative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["size"] = list(self.size)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        return cls(**d)


@dataclass
class Scene:
    """Clean views ``[3, H, W]`` plus per-view integer disparity fields ``[H, W]``."""

    left: np.ndarray
    right: np.ndarray
    disparity_left: np.ndarray
    disparity_right: np.ndarray
    layer_disparities: tuple


def value_noise(rng: np.random.Generator, h: int, w: int, octaves: int = 4) -> np.ndarray:
    """Sum of bicubically upsampled random grids, normalized to [0, 1]."""
    out = np.zeros((h, w))
    amp, total = 1.0, 0.0
    for o in range(octaves):
        cells = 2 ** (o + 1)
        gh, gw = min(cells, h), min(cells, w)
        grid = rng.random((gh + 1, gw + 1))
        up = zoom(grid, ((h + 1) / grid.shape[0], (w + 1) / grid.shape[1]), order=3, mode="reflect")
        out += amp * up[:h, :w]
        total += amp
        amp *= 0.5
    out /= total
    lo, hi = out.min(), out.max()
    return (out - lo) / (hi - lo) if hi > lo else np.zeros_like(out)


def _colorize(rng: np.random.Generator, t: np.ndarray) -> np.ndarray:
    c0, c1 = rng.random(3), rng.random(3)
    return c0[:, None, None] * (1 - t) + c1[:, None, None] * t


def _shape_layer(rng, h, w, n_shapes, octaves):
    """Texture and coverage mask for one foreground layer."""
    tex = np.zeros((3, h, w))
    mask = np.zeros((h, w), dtype=bool)
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(n_shapes):
        rh, rw = rng.integers(h // 6, h // 2 + 1), rng.integers(w // 8, w // 3 + 1)
        y0, x0 = rng.integers(0, h - rh + 1), rng.integers(0, w - rw + 1)
        region = (yy >= y0) & (yy < y0 + rh) & (xx >= x0) & (xx < x0 + rw)
        if rng.random() < 0.5:
            angle = rng.uniform(0, 2 * np.pi)
            ramp = np.cos(angle) * (xx - x0) / rw + np.sin(angle) * (yy - y0) / rh
            t = (ramp - ramp[region].min()) / max(np.ptp(ramp[region]), 1e-9)
        else:
            t = value_noise(rng, h, w, octaves)
        tex[:, region] = _colorize(rng, t)[:, region]
        mask |= region
    return tex, mask


def generate_scene(spec: SceneSpec) -> Scene:
    """Render a stereo pair; deterministic in ``spec``."""
    rng = np.random.default_rng(spec.seed)
    H, W = spec.size
    D = spec.disparity_range
    Wc = W + D
    # disparities increase towards the viewer; the nearest layer gets the full range
    if spec.layers == 1:
        disps = [D]
    else:
        disps = sorted(int(d) for d in rng.integers(0, D + 1, size=spec.layers - 1))
        disps = [min(disps[0], D // 3)] + disps[1:] + [D]
        disps = disps[: spec.layers]
    textures = [_colorize(rng, value_noise(rng, H, Wc, spec.octaves))]
    masks = [np.ones((H, Wc), dtype=bool)]
    for _ in range(1, spec.layers):
        tex, mask = _shape_layer(rng, H, Wc, spec.shapes, spec.octaves)
        textures.append(tex)
        masks.append(mask)

    cols = np.arange(W)
    views, fields = [], []
    for side in (0, 1):
        img = np.zeros((3, H, W))
        disp = np.zeros((H, W), dtype=np.int64)
        for tex, mask, d in zip(textures, masks, disps):
            idx = cols + (d if side else 0)
            m = mask[:, idx]
            img[:, m] = tex[:, :, idx][:, m]
            disp[m] = d
        views.append(img)
        fields.append(disp)
    if spec.sensor_noise > 0:
        views = [np.clip(v + rng.normal(0, spec.sensor_noise, v.shape), 0, 1) for v in views]
    return Scene(views[0], views[1], fields[0], fields[1], tuple(disps))
