"""Two-stage spiking stereo restoration network and its super-resolution variant."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, asdict, fields
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Module, ModuleList, Tensor, SurrogateSpec
from .blocks import (
    FEB,
    SSCA,
    SSCM,
    SSRB,
    Conv2d,
    Downsample,
    StereoPair,
    Upsample,
    assign_names,
    reset_states,
)
from .neuron import LifParams
from .profiler import EnergyLedger, active_ledger
from .resample import resize_bicubic

TASKS = ("raindrop", "rainstreak", "lowlight", "superres")


@dataclass
class NetworkConfig:
    """Architecture and ablation settings.

    ``u_th=None`` picks the task default (0.1 for low-light, 0.2 otherwise).
    """

    channels: tuple = (32, 64, 96, 128, 160)
    T: int = 4
    u_th: Optional[float] = None
    tau: float = 2.0
    u_rest: float = 0.0
    refine_blocks: int = 4
    refine_channels: int = 32
    task: str = "raindrop"
    sr_scale: int = 4
    sr_blocks: int = 6
    sr_channels: int = 32
    feb_depth: int = 2
    decoder_feb_depth: int = 1
    sscm_reduction: int = 8
    sscm_spatial_kernel: int = 7
    sscm_init_scale: float = 0.1
    ssc_expansion: int = 2
    ssca_scale: bool = True
    ssca_tied: bool = False
    shortcut: str = "membrane"
    sscm_activation: str = "multiplication"
    use_sscm: bool = True
    use_ssca: bool = True
    use_ssrb: bool = True
    surrogate: str = "arctan"
    surrogate_alpha: float = 2.0
    tail_init_scale: float = 0.1
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        if any(b <= a for a, b in zip(self.channels, self.channels[1:])):
            raise ValueError(f"channels must be strictly increasing, got {self.channels}")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.refine_blocks < 0:
            raise ValueError("refine_blocks must be >= 0")
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.task == "superres" and self.sr_scale not in (2, 4):
            raise ValueError(f"unsupported super-resolution scale {self.sr_scale}")

    @property
    def threshold(self) -> float:
        if self.u_th is not None:
            return self.u_th
        return 0.1 if self.task == "lowlight" else 0.2

    @property
    def multiple(self) -> int:
        return 2 ** (len(self.channels) - 1)

    def lif_params(self) -> LifParams:
        return LifParams(tau=self.tau, u_th=self.threshold, u_rest=self.u_rest)

    def surrogate_spec(self) -> SurrogateSpec:
        return SurrogateSpec(self.surrogate, self.surrogate_alpha)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown network config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class RestorationOutput:
    coarse: StereoPair
    refined: StereoPair
    ledger: Optional[EnergyLedger] = None


def temporal_replicate(img: Tensor, T: int) -> Tensor:
    """Repeat a static input along a new leading time axis."""
    if T < 1:
        raise ValueError("T must be >= 1")
    data = np.broadcast_to(img.data, (T,) + img.shape)

    def backward(g):
        return (g.sum(axis=0),)

    return Tensor._make(np.ascontiguousarray(data), (img,), backward)


def temporal_average(x: Tensor) -> Tensor:
    """Mean over the leading time axis."""
    if x.shape[0] < 1:
        raise ValueError("need at least one time step")
    return ad.mean_over_axis(x, axis=0)


def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


class CoarseStage(Module):
    """U-shaped spiking encoder-decoder predicting a residual per view."""

    def __init__(self, cfg: NetworkConfig, rng: np.random.Generator, dtype):
        super().__init__()
        kw = dict(lif=cfg.lif_params(), surrogate=cfg.surrogate_spec(), rng=rng, dtype=dtype)
        ch = cfg.channels
        self.cfg = cfg
        self.head = Conv2d(3, ch[0], 3, rng=rng, dtype=dtype)
        self.enc_feb = ModuleList(FEB(c, cfg.feb_depth, cfg.shortcut, **kw) for c in ch[:-1])
        self.enc_sscm = ModuleList(self._sscm(c, kw) for c in ch[:-1]) if cfg.use_sscm else None
        self.down = ModuleList(Downsample(a, b, **kw) for a, b in zip(ch[:-1], ch[1:]))
        self.mid_feb = FEB(ch[-1], cfg.feb_depth, cfg.shortcut, **kw)
        self.mid_sscm = self._sscm(ch[-1], kw) if cfg.use_sscm else None
        self.mid_ssca = SSCA(ch[-1], cfg.ssca_scale, cfg.ssca_tied, **kw) if cfg.use_ssca else None
        rev = list(reversed(ch[:-1]))
        self.up = ModuleList(Upsample(b, a, **kw) for a, b in zip(rev, reversed(ch[1:])))
        self.dec_feb = ModuleList(FEB(c, cfg.decoder_feb_depth, cfg.shortcut, **kw) for c in rev)
        self.dec_sscm = ModuleList(self._sscm(c, kw) for c in rev) if cfg.use_sscm else None
        self.dec_ssca = ModuleList(SSCA(c, cfg.ssca_scale, cfg.ssca_tied, **kw) for c in rev) if cfg.use_ssca else None
        self.tail = Conv2d(ch[0], 3, 3, rng=rng, dtype=dtype)
        self.tail.weight.data *= cfg.tail_init_scale

    def _sscm(self, c, kw):
        cfg = self.cfg
        return SSCM(c, cfg.sscm_reduction, cfg.sscm_spatial_kernel, cfg.sscm_activation, cfg.sscm_init_scale, **kw)

    def _level(self, f: Tensor, feb, sscm, ssca) -> Tensor:
        f = feb(f)
        if sscm is not None:
            f = sscm(StereoPair(f)).both
        if ssca is not None:
            f = ssca(StereoPair(f)).both
        return f

    def forward(self, images: Tensor) -> Tensor:
        """``images``: stacked views ``[2N, 3, H, W]``; returns the coarse images, same shape."""
        x = temporal_replicate(images, self.cfg.T)
        f = self.head(x)
        skips = []
        for i in range(len(self.down)):
            sscm = self.enc_sscm[i] if self.enc_sscm is not None else None
            f = self._level(f, self.enc_feb[i], sscm, None)
            skips.append(f)
            f = self.down[i](f)
        f = self._level(f, self.mid_feb, self.mid_sscm, self.mid_ssca)
        for i, skip in enumerate(reversed(skips)):
            f = self.up[i](f, size=skip.shape[-2:]) + skip
            sscm = self.dec_sscm[i] if self.dec_sscm is not None else None
            ssca = self.dec_ssca[i] if self.dec_ssca is not None else None
            f = self._level(f, self.dec_feb[i], sscm, ssca)
        residual = temporal_average(self.tail(f))
        return images + residual


class RefineStage(Module):
    """Full-resolution refinement with a chain of SSRBs."""

    def __init__(self, cfg: NetworkConfig, rng: np.random.Generator, dtype):
        super().__init__()
        kw = dict(lif=cfg.lif_params(), surrogate=cfg.surrogate_spec(), rng=rng, dtype=dtype)
        c = cfg.refine_channels
        self.cfg = cfg
        self.head = Conv2d(3, c, 3, rng=rng, dtype=dtype)
        self.blocks = ModuleList(SSRB(c, cfg.ssc_expansion, **kw) for _ in range(cfg.refine_blocks))
        self.tail = Conv2d(c, 3, 3, rng=rng, dtype=dtype)
        self.tail.weight.data *= cfg.tail_init_scale

    def forward(self, images: Tensor) -> Tensor:
        f = self.head(temporal_replicate(images, self.cfg.T))
        pair = StereoPair(f)
        for blk in self.blocks:
            pair = blk(pair)
        return images + temporal_average(self.tail(pair.both))


class SuperResolver(Module):
    """Single-resolution spike trunk with a pixel-shuffle tail on a bicubic base."""

    def __init__(self, cfg: NetworkConfig, rng: np.random.Generator, dtype):
        super().__init__()
        kw = dict(lif=cfg.lif_params(), surrogate=cfg.surrogate_spec(), rng=rng, dtype=dtype)
        c, s = cfg.sr_channels, cfg.sr_scale
        self.cfg = cfg
        self.head = Conv2d(3, c, 3, rng=rng, dtype=dtype)
        self.febs = ModuleList(FEB(c, cfg.feb_depth, cfg.shortcut, **kw) for _ in range(cfg.sr_blocks))
        self.sscms = (
            ModuleList(SSCM(c, cfg.sscm_reduction, cfg.sscm_spatial_kernel, cfg.sscm_activation, cfg.sscm_init_scale, **kw)
                       for _ in range(cfg.sr_blocks))
            if cfg.use_sscm
            else None
        )
        self.sscas = (
            ModuleList(SSCA(c, cfg.ssca_scale, cfg.ssca_tied, **kw) for _ in range(cfg.sr_blocks))
            if cfg.use_ssca
            else None
        )
        self.tail = Conv2d(c, 3 * s * s, 3, rng=rng, dtype=dtype)
        self.tail.weight.data *= cfg.tail_init_scale

    def forward(self, images: Tensor) -> Tensor:
        s = self.cfg.sr_scale
        H, W = images.shape[-2:]
        f = self.head(temporal_replicate(images, self.cfg.T))
        for i in range(self.cfg.sr_blocks):
            f = self.febs[i](f)
            if self.sscms is not None:
                f = self.sscms[i](StereoPair(f)).both
            if self.sscas is not None:
                f = self.sscas[i](StereoPair(f)).both
        detail = ad.pixel_shuffle(temporal_average(self.tail(f)), s)
        base = Tensor(resize_bicubic(images.data, H * s, W * s))
        return base + detail


class StereoRestorer(Module):
    """Spiking stereo restoration model.

    Restoration tasks run a coarse U-shaped stage followed by an optional
    refinement stage; ``task="superres"`` runs :class:`SuperResolver` instead.
    Both views are processed together, stacked on the batch axis.
    """

    def __init__(self, cfg: Optional[NetworkConfig] = None):
        super().__init__()
        cfg = cfg or NetworkConfig()
        self.cfg = cfg
        dtype = np.dtype(cfg.dtype)
        rng = np.random.default_rng(cfg.seed)
        if cfg.task == "superres":
            self.sr = SuperResolver(cfg, rng, dtype)
            self.stage1 = self.stage2 = None
        else:
            self.sr = None
            self.stage1 = CoarseStage(cfg, rng, dtype)
            self.stage2 = RefineStage(cfg, rng, dtype) if cfg.use_ssrb else None
        assign_names(self)

    @property
    def dtype(self):
        return np.dtype(self.cfg.dtype)

    def reset(self) -> None:
        reset_states(self)

    def _stack(self, left, right) -> Tensor:
        left, right = _as_tensor(left, self.dtype), _as_tensor(right, self.dtype)
        if left.ndim == 3:
            left, right = left.reshape((1,) + left.shape), right.reshape((1,) + right.shape)
        return StereoPair.from_views(left, right, axis=0).both

    def _pad(self, images: Tensor) -> tuple[Tensor, tuple]:
        m = self.cfg.multiple
        H, W = images.shape[-2:]
        ph, pw = (-H) % m, (-W) % m
        if ph == 0 and pw == 0:
            return images, (H, W)
        warnings.warn(f"input {H}x{W} is not divisible by {m}; reflect-padding and cropping", stacklevel=3)
        return ad.pad(images, (0, ph, 0, pw), mode="reflect"), (H, W)

    def forward_stage1(self, images: Tensor) -> Tensor:
        padded, (H, W) = self._pad(images)
        out = self.stage1(padded)
        return out[..., :H, :W] if out.shape[-2:] != (H, W) else out

    def forward_stage2(self, coarse: Tensor) -> Tensor:
        if self.stage2 is None:
            return coarse
        return self.stage2(coarse)

    def forward(self, left, right) -> RestorationOutput:
        """Restore a stereo pair; inputs are ``[3, H, W]`` or batched ``[N, 3, H, W]``."""
        images = self._stack(left, right)
        self.reset()
        ledger = active_ledger()
        if ledger is not None:
            ledger.add_samples(images.shape[0] // 2)
        if self.sr is not None:
            out = self.sr(images)
            pair = StereoPair(out, axis=0)
            return RestorationOutput(coarse=pair, refined=pair, ledger=ledger)
        coarse = self.forward_stage1(images)
        refined = self.forward_stage2(coarse)
        return RestorationOutput(StereoPair(coarse, axis=0), StereoPair(refined, axis=0), ledger)


def count_parameters(model: Module) -> int:
    return model.num_parameters()
