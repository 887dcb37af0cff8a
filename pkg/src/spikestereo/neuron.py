"""Leaky integrate-and-fire neurons and joint time/batch/space normalization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .autodiff import Module, Parameter, Tensor, SurrogateSpec, DEFAULT_SURROGATE
from .autodiff.surrogate import SpikeTensor, check_finite
from .autodiff.tensor import ShapeError


@dataclass(frozen=True)
class LifParams:
    """Membrane constants: time constant, firing threshold, reset/rest level."""

    tau: float = 2.0
    u_th: float = 0.2
    u_rest: float = 0.0

    def __post_init__(self):
        if not self.tau > 1:
            raise ValueError(f"tau must be > 1, got {self.tau}")
        if not self.u_th > self.u_rest:
            raise ValueError(f"u_th ({self.u_th}) must exceed u_rest ({self.u_rest})")


def lif_forward(
    x: Tensor,
    params: LifParams = LifParams(),
    surrogate: Optional[SurrogateSpec] = None,
    v_init: Optional[np.ndarray] = None,
) -> tuple[SpikeTensor, np.ndarray]:
    """Run charge, fire and hard reset over the leading time axis of ``x``.

    Returns the stacked spike train and the membrane potential after the last
    step. In the backward pass the spike that gates the reset is treated as a
    constant, so gradients reach ``x`` only through the charged potential.
    """
    xd = x.data
    if xd.ndim < 1 or xd.shape[0] == 0:
        raise ValueError("lif_forward needs at least one time step")
    check_finite(xd)
    sg = surrogate or DEFAULT_SURROGATE
    T = xd.shape[0]
    inv_tau = 1.0 / params.tau
    u_rest, u_th = params.u_rest, params.u_th

    if v_init is None:
        v = np.full(xd.shape[1:], u_rest, dtype=xd.dtype)
    else:
        v = np.asarray(v_init, dtype=xd.dtype)
    U = np.empty_like(xd)
    S = np.empty_like(xd)
    for t in range(T):
        u = v + inv_tau * (xd[t] - (v - u_rest))
        s = (u - u_th >= 0).astype(xd.dtype)
        v = (1 - s) * u + s * u_rest
        U[t] = u
        S[t] = s

    def backward(g):
        gx = np.empty_like(g)
        gv = None
        for t in range(T - 1, -1, -1):
            gu = g[t] * sg.derivative(U[t] - u_th)
            if gv is not None:
                gu += gv * (1 - S[t])
            gx[t] = gu * inv_tau
            gv = gu * (1 - inv_tau)
        return (gx,)

    out = SpikeTensor._make(S, (x,), backward)
    out._ones = None
    return out, v


class LIFNode(Module):
    """Bank of LIF neurons whose membrane state persists between calls until reset."""

    def __init__(self, params: LifParams = LifParams(), surrogate: Optional[SurrogateSpec] = None):
        super().__init__()
        self.params = params
        self.surrogate = surrogate or DEFAULT_SURROGATE
        self.v: Optional[np.ndarray] = None

    def reset_state(self) -> None:
        self.v = None

    def forward(self, x: Tensor) -> SpikeTensor:
        v0 = None if self.v is None or self.v.shape != x.shape[1:] else self.v
        spikes, self.v = lif_forward(x, self.params, self.surrogate, v0)
        return spikes


def _chan_dot(a: np.ndarray, b: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Per-channel inner product of two ``[..., C, H, W]`` arrays."""
    C = a.shape[-3]
    a3 = a.reshape(-1, C, a.shape[-2] * a.shape[-1])
    b3 = b.reshape(-1, C, b.shape[-2] * b.shape[-1])
    return np.einsum("bcs,bcs->c", a3, b3, dtype=dtype)


def _channel_axes(x: np.ndarray) -> tuple:
    # channel axis is third from the end: [..., C, H, W]
    return tuple(i for i in range(x.ndim) if i != x.ndim - 3)


def tdbn_forward(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Standardize each channel over time, batch and space, then apply the affine map.

    In training mode the running statistics arrays are updated in place.
    """
    C = gamma.shape[0]
    if x.ndim < 3 or x.shape[-3] != C:
        raise ShapeError(f"tdBN channel axis mismatch: expected {C}, got shape {x.shape}")
    xd = x.data
    axes = _channel_axes(xd)
    bshape = (C, 1, 1)
    g_, b_ = gamma.data.reshape(bshape), beta.data.reshape(bshape)

    if training:
        count = xd.size // C
        mean = xd.mean(axis=axes, dtype=np.float64)
        centered = xd - mean.reshape(bshape).astype(xd.dtype)
        var = _chan_dot(centered, centered) / count
        inv_std = (1.0 / np.sqrt(var + eps)).astype(xd.dtype).reshape(bshape)
        xhat = centered * inv_std
        out = xhat * g_ + b_
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        unbiased = var * count / max(count - 1, 1)
        running_var *= 1 - momentum
        running_var += momentum * unbiased

        def backward(g):
            gg = gb = gx = None
            sum_g = g.sum(axis=axes, dtype=np.float64)
            sum_gx = _chan_dot(g, xhat)
            if gamma.requires_grad:
                gg = sum_gx.astype(xd.dtype)
            if beta.requires_grad:
                gb = sum_g.astype(xd.dtype)
            if x.requires_grad:
                mg = (sum_g / count).astype(xd.dtype).reshape(bshape)
                mgx = (sum_gx / count).astype(xd.dtype).reshape(bshape)
                gx = (g - mg - xhat * mgx) * (g_ * inv_std)
            return gx, gg, gb

        return Tensor._make(out, (x, gamma, beta), backward)

    inv_std = (1.0 / np.sqrt(running_var + eps)).astype(xd.dtype).reshape(bshape)
    rm = running_mean.astype(xd.dtype).reshape(bshape)
    xhat = (xd - rm) * inv_std
    out = xhat * g_ + b_

    def backward_eval(g):
        gx = g * (g_ * inv_std) if x.requires_grad else None
        gg = _chan_dot(g, xhat, g.dtype) if gamma.requires_grad else None
        gb = g.sum(axis=axes) if beta.requires_grad else None
        return gx, gg, gb

    return Tensor._make(out, (x, gamma, beta), backward_eval)


class TdBatchNorm(Module):
    """Per-channel normalization with statistics pooled over [T, N, H, W]."""

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1, dtype=np.float32):
        super().__init__()
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))
        self.register_buffer("running_mean", np.zeros(channels, dtype=np.float64))
        self.register_buffer("running_var", np.ones(channels, dtype=np.float64))

    def forward(self, x: Tensor) -> Tensor:
        return tdbn_forward(
            x,
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            self.training,
            self.momentum,
            self.eps,
        )
