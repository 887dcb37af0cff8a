"""Spike-compatible building blocks.

Feature tensors use the layout ``[T, B, C, H, W]``. A :class:`StereoPair`
stores both views stacked along the batch axis (left first) so that modules
whose weights are shared between views run once on the stacked tensor, and
cross-view modules slice the halves apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Module, Parameter, Tensor, SurrogateSpec
from .neuron import LIFNode, LifParams, TdBatchNorm
from .profiler import dense_flops_of, record_layer


@dataclass
class StereoPair:
    """Left and right views stacked on ``axis`` (1 for features, 0 for images)."""

    both: Tensor
    axis: int = 1

    @classmethod
    def from_views(cls, left: Tensor, right: Tensor, axis: int = 1) -> "StereoPair":
        if left.shape != right.shape:
            raise ad.ShapeError(f"stereo views differ in shape: {left.shape} vs {right.shape}")
        return cls(ad.concat([left, right], axis=axis), axis)

    @property
    def n(self) -> int:
        return self.both.shape[self.axis] // 2

    def _half(self, i: int) -> Tensor:
        sl = [slice(None)] * self.both.ndim
        sl[self.axis] = slice(i * self.n, (i + 1) * self.n)
        return self.both[tuple(sl)]

    @property
    def left(self) -> Tensor:
        return self._half(0)

    @property
    def right(self) -> Tensor:
        return self._half(1)

    @property
    def shape(self) -> tuple:
        return self.left.shape

    def swapped(self) -> "StereoPair":
        return StereoPair.from_views(self.right, self.left, self.axis)


def _init_weight(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def fold_time(x: Tensor) -> Tensor:
    T, B = x.shape[:2]
    return x.reshape((T * B,) + x.shape[2:])


def unfold_time(x: Tensor, T: int) -> Tensor:
    return x.reshape((T, x.shape[0] // T) + x.shape[1:])


class Conv2d(Module):
    """Plain (non-spiking) convolution with bias, applied frame-wise to ``[T, B, C, H, W]``.

    Its FLOPs are charged as dense multiply-accumulates.
    """

    def __init__(self, cin, cout, kernel=3, stride=1, rng=None, dtype=np.float32, bias=True):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.cin, self.cout, self.kernel, self.stride = cin, cout, kernel, stride
        fan_in = cin * kernel * kernel
        self.weight = Parameter(_init_weight(rng, (cout, cin, kernel, kernel), fan_in, dtype))
        self.bias = Parameter(np.zeros(cout, dtype=dtype)) if bias else None
        self.qualname = "conv"

    def forward(self, x: Tensor) -> Tensor:
        T = x.shape[0]
        y = ad.conv2d(fold_time(x), self.weight, self.bias, stride=self.stride, padding=self.kernel // 2)
        Ho, Wo = y.shape[-2:]
        flops = dense_flops_of("conv", cout=self.cout, cin=self.cin, kh=self.kernel, kw=self.kernel, hout=Ho, wout=Wo)
        record_layer(None, self.qualname, "float", flops, steps=y.shape[0])
        return unfold_time(y, T)


class SpikeConvUnit(Module):
    """LIF -> convolution -> tdBN. ``depthwise=True`` gives the depthwise variant.

    The convolution only ever sees the binary spike train emitted by the LIF
    layer; the result is a real-valued membrane-level signal.
    """

    def __init__(
        self,
        cin: int,
        cout: int,
        kernel: int = 3,
        stride: int = 1,
        depthwise: bool = False,
        lif: LifParams = LifParams(),
        surrogate: Optional[SurrogateSpec] = None,
        rng: Optional[np.random.Generator] = None,
        dtype=np.float32,
    ):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        if depthwise and cin != cout:
            raise ValueError("depthwise unit needs cin == cout")
        self.cin, self.cout, self.kernel, self.stride = cin, cout, kernel, stride
        self.groups = cin if depthwise else 1
        self.lif = LIFNode(lif, surrogate)
        wshape = (cout, cin // self.groups, kernel, kernel)
        self.weight = Parameter(_init_weight(rng, wshape, wshape[1] * kernel * kernel, dtype))
        self.bn = TdBatchNorm(cout, dtype=dtype)
        self.qualname = "scu"

    def forward_spikes(self, x: Tensor) -> tuple[Tensor, Tensor]:
        T = x.shape[0]
        spikes = self.lif(x)
        y = ad.conv2d(fold_time(spikes), self.weight, stride=self.stride, padding=self.kernel // 2, groups=self.groups)
        Ho, Wo = y.shape[-2:]
        flops = dense_flops_of(
            "conv", cout=self.cout, cin=self.cin, kh=self.kernel, kw=self.kernel, hout=Ho, wout=Wo, groups=self.groups
        )
        # per time step, whole batch
        record_layer(None, self.qualname, "spike", flops * x.shape[1], spikes)
        return self.bn(unfold_time(y, T)), spikes

    def forward(self, x: Tensor) -> Tensor:
        return self.forward_spikes(x)[0]


def SpikeDepthwiseUnit(channels: int, kernel: int = 3, **kw) -> SpikeConvUnit:
    return SpikeConvUnit(channels, channels, kernel, depthwise=True, **kw)


def _record_mul(name: str, x: Tensor) -> None:
    record_layer(None, name, "float", x.size, op="mul")


class SRBB(Module):
    """Spike residual basic block: ``y = x + SCU2(SCU1(x))`` on membrane signals.

    ``shortcut="sew"`` replaces the membrane shortcut with a spike-level one,
    ``y = S(x) + SCU2(SCU1(x))``, where ``S(x)`` is the first unit's spike train.
    """

    def __init__(self, channels: int, shortcut: str = "membrane", **kw):
        super().__init__()
        if shortcut not in ("membrane", "sew"):
            raise ValueError(f"unknown shortcut {shortcut!r}")
        self.shortcut = shortcut
        self.scu1 = SpikeConvUnit(channels, channels, 3, **kw)
        self.scu2 = SpikeConvUnit(channels, channels, 3, **kw)

    def forward(self, x: Tensor) -> Tensor:
        h, spikes = self.scu1.forward_spikes(x)
        branch = self.scu2(h)
        if self.shortcut == "sew":
            return spikes + branch
        return x + branch


class FEB(Module):
    """Stack of SRBBs; applied to the stacked views so weights are shared."""

    def __init__(self, channels: int, depth: int = 2, shortcut: str = "membrane", **kw):
        super().__init__()
        self.blocks = ad.ModuleList(SRBB(channels, shortcut, **kw) for _ in range(depth))

    def forward(self, x: Tensor) -> Tensor:
        for blk in self.blocks:
            x = blk(x)
        return x


class SSCM(Module):
    """Stereo convolutional modulation.

    The views are concatenated along channels into ``F`` (2C channels). Channel
    modulation scales ``F`` by ``W(GAP F) + W(GMP F)``; spatial modulation then
    scales the result by an SCU over its channel-mean and channel-max maps. The
    modulated tensor is split back into per-view halves ``M_l, M_r`` and each
    view becomes ``M_v * F_v + F_v``.

    ``W`` is a shared bottleneck linear map ``2C -> hidden -> 2C`` with no
    activation in between; its second factor is scaled by ``init_scale`` at
    construction. ``activation="sigmoid"`` gates both modulation
    signals with a sigmoid instead (ablation only).
    """

    def __init__(
        self,
        channels: int,
        reduction: int = 8,
        spatial_kernel: int = 7,
        activation: str = "multiplication",
        init_scale: float = 0.1,
        rng=None,
        dtype=np.float32,
        **kw,
    ):
        super().__init__()
        if activation not in ("multiplication", "sigmoid"):
            raise ValueError(f"unknown SSCM activation {activation!r}")
        rng = rng or np.random.default_rng(0)
        c2 = 2 * channels
        hidden = max(c2 // reduction, 4)
        self.channels, self.hidden = channels, hidden
        self.activation = activation
        self.w_down = Parameter(_init_weight(rng, (hidden, c2), c2, dtype))
        # the modulation is cubic in F, so start W small to keep deep stacks bounded
        self.w_up = Parameter((_init_weight(rng, (c2, hidden), hidden, dtype) * init_scale).astype(dtype))
        self.spatial = SpikeConvUnit(2, 1, spatial_kernel, rng=rng, dtype=dtype, **kw)
        self.qualname = "sscm"

    def channel_weights(self, pooled: Tensor) -> Tensor:
        return ad.linear(ad.linear(pooled, self.w_down), self.w_up)

    def forward(self, pair: StereoPair) -> StereoPair:
        Fl, Fr = pair.left, pair.right
        T, N, C, H, W = Fl.shape
        F = ad.concat([Fl, Fr], axis=2)
        gap = F.mean(axis=(3, 4))
        gmp = F.max(axis=(3, 4))
        scale = self.channel_weights(gap) + self.channel_weights(gmp)
        record_layer(None, f"{self.qualname}.linear", "float", 2 * 2 * (2 * C) * self.hidden * N, op="linear", steps=T)
        if self.activation == "sigmoid":
            scale = ad.sigmoid(scale)
        F1 = F * scale.reshape(T, N, 2 * C, 1, 1)
        _record_mul(f"{self.qualname}.channel_mul", F1)

        pooled = ad.concat([F1.mean(axis=2, keepdims=True), F1.max(axis=2, keepdims=True)], axis=2)
        spatial = self.spatial(pooled)
        if self.activation == "sigmoid":
            spatial = ad.sigmoid(spatial)
        F2 = F1 * spatial
        _record_mul(f"{self.qualname}.spatial_mul", F2)

        Ml, Mr = ad.split(F2, 2, axis=2)
        out_l = Ml * Fl + Fl
        out_r = Mr * Fr + Fr
        _record_mul(f"{self.qualname}.residual_mul", F2)
        return StereoPair.from_views(out_l, out_r)


class SSCA(Module):
    """Row-wise stereo cross-attention without softmax.

    For every time step and image row, ``A = Q K^T / sqrt(C)`` relates left
    positions to right positions along the epipolar line; the left view
    receives ``W_l3(A V_r)`` and the right view ``W_r3(A^T V_l)``.
    ``tied=True`` makes both views use the same three units.
    """

    def __init__(self, channels: int, scale: bool = True, tied: bool = False, **kw):
        super().__init__()
        self.channels = channels
        self.scale = 1.0 / math.sqrt(channels) if scale else 1.0
        self.l1 = SpikeConvUnit(channels, channels, 1, **kw)
        self.l2 = SpikeConvUnit(channels, channels, 1, **kw)
        self.l3 = SpikeConvUnit(channels, channels, 1, **kw)
        if tied:
            self.r1, self.r2, self.r3 = self.l1, self.l2, self.l3
        else:
            self.r1 = SpikeConvUnit(channels, channels, 1, **kw)
            self.r2 = SpikeConvUnit(channels, channels, 1, **kw)
            self.r3 = SpikeConvUnit(channels, channels, 1, **kw)
        self.tied = tied
        self.qualname = "ssca"

    def named_parameters(self, prefix: str = ""):
        seen = set()
        for name, p in super().named_parameters(prefix):
            if id(p) not in seen:
                seen.add(id(p))
                yield name, p

    def forward(self, pair: StereoPair) -> StereoPair:
        Fl, Fr = pair.left, pair.right
        T, N, C, H, W = Fl.shape
        rows_first = (0, 1, 3, 4, 2)  # [T, N, H, W, C]
        q = self.l1(Fl).transpose(rows_first)
        vl = self.l2(Fl).transpose(rows_first)
        self._reset_if_tied()
        k = self.r1(Fr).transpose(rows_first)
        vr = self.r2(Fr).transpose(rows_first)
        attn = ad.matmul(q, k.transpose(0, 1, 2, 4, 3)) * self.scale
        msg_l = ad.matmul(attn, vr).transpose(0, 1, 4, 2, 3)
        msg_r = ad.matmul(attn.transpose(0, 1, 2, 4, 3), vl).transpose(0, 1, 4, 2, 3)
        per_frame = H * W * W * C
        record_layer(None, f"{self.qualname}.attention", "float", 3 * per_frame * N, op="matmul", steps=T)
        out_l = self.l3(msg_l) + Fl
        self._reset_if_tied()
        out_r = self.r3(msg_r) + Fr
        return StereoPair.from_views(out_l, out_r)

    def _reset_if_tied(self) -> None:
        # shared units see the second view as a fresh input sequence
        if self.tied:
            reset_states(self)


class SSC(Module):
    """Separable unit: 1x1 SCU expand, 3x3 depthwise SDU, 1x1 SCU project."""

    def __init__(self, channels: int, expansion: int = 2, **kw):
        super().__init__()
        hidden = channels * expansion
        self.expand = SpikeConvUnit(channels, hidden, 1, **kw)
        self.dw = SpikeDepthwiseUnit(hidden, 3, **kw)
        self.project = SpikeConvUnit(hidden, channels, 1, **kw)

    def forward(self, x: Tensor) -> Tensor:
        return self.project(self.dw(self.expand(x)))


class SSRB(Module):
    """Stereo refinement block.

    ``G = SSC(F)`` per view (shared weights), ``M = SCU([G_l, G_r])`` fuses the
    views, and each view becomes ``M_v * G_v + F_v``.
    """

    def __init__(self, channels: int, expansion: int = 2, **kw):
        super().__init__()
        self.ssc = SSC(channels, expansion, **kw)
        self.fuse = SpikeConvUnit(2 * channels, 2 * channels, 1, **kw)
        self.qualname = "ssrb"

    def forward(self, pair: StereoPair) -> StereoPair:
        G = StereoPair(self.ssc(pair.both), pair.axis)
        Gl, Gr = G.left, G.right
        M = self.fuse(ad.concat([Gl, Gr], axis=2))
        Ml, Mr = ad.split(M, 2, axis=2)
        _record_mul(f"{self.qualname}.modulate", M)
        return StereoPair.from_views(Ml * Gl + pair.left, Mr * Gr + pair.right)


class Downsample(Module):
    """3x3 stride-2 SCU. Odd sizes give ``ceil(H / 2)``."""

    def __init__(self, cin: int, cout: int, **kw):
        super().__init__()
        self.scu = SpikeConvUnit(cin, cout, 3, stride=2, **kw)

    def forward(self, x: Tensor) -> Tensor:
        return self.scu(x)


class Upsample(Module):
    """Nearest-neighbour x2 followed by a 1x1 SCU."""

    def __init__(self, cin: int, cout: int, **kw):
        super().__init__()
        self.scu = SpikeConvUnit(cin, cout, 1, **kw)

    def forward(self, x: Tensor, size: Optional[tuple] = None) -> Tensor:
        y = ad.nearest_upsample(x, 2)
        if size is not None and y.shape[-2:] != tuple(size):
            y = y[..., : size[0], : size[1]]
        return self.scu(y)


def reset_states(module: Module) -> None:
    """Return every LIF layer inside ``module`` to its rest potential."""
    for m in module.modules_of(LIFNode):
        m.reset_state()


def assign_names(module: Module, prefix: str = "") -> None:
    """Give every module a dotted ``qualname`` used as its ledger key."""
    for name, m in module.named_modules(prefix):
        m.qualname = name or type(m).__name__.lower()
