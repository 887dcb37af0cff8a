"""2-D cross-correlation with im2col forward and col2im backward."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .tensor import Tensor, ShapeError


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _check(x: Tensor, weight: Tensor, stride: int, padding: int, groups: int):
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be 4-D [N, C, H, W], got shape {x.shape}")
    if weight.ndim != 4:
        raise ShapeError(f"conv2d weight must be 4-D [Cout, Cin/groups, kh, kw], got {weight.shape}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    N, C, H, W = x.shape
    Cout, Cg, kh, kw = weight.shape
    if C != Cg * groups:
        raise ShapeError(
            f"conv2d channel axis mismatch: input has C={C}, weight expects {Cg * groups} "
            f"(Cin/groups={Cg}, groups={groups})"
        )
    if H + 2 * padding < kh:
        raise ShapeError(f"conv2d height axis too small: H={H}+2*{padding} < kernel {kh}")
    if W + 2 * padding < kw:
        raise ShapeError(f"conv2d width axis too small: W={W}+2*{padding} < kernel {kw}")
    if groups != 1 and not (groups == C and Cout == C and Cg == 1):
        raise ShapeError(f"only groups=1 or depthwise (groups=C=Cout) are supported, got groups={groups}")


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> Tensor:
    """Cross-correlate ``x`` [N, Cin, H, W] with ``weight`` [Cout, Cin/groups, kh, kw].

    Output spatial size is ``floor((H + 2p - kh) / stride) + 1``.
    """
    _check(x, weight, stride, padding, groups)
    if groups != 1:
        out = _depthwise(x, weight, stride, padding)
    else:
        out = _dense(x, weight, stride, padding)
    if bias is not None:
        from .functional import add

        out = add(out, bias.reshape(1, -1, 1, 1))
    return out


def _dense(x: Tensor, weight: Tensor, s: int, p: int) -> Tensor:
    N, C, H, W = x.shape
    Cout, _, kh, kw = weight.shape
    Ho = conv_output_size(H, kh, s, p)
    Wo = conv_output_size(W, kw, s, p)
    xd = x.data
    xp = np.pad(xd, ((0, 0), (0, 0), (p, p), (p, p))) if p else xd
    dtype = np.result_type(xd, weight.data)

    if kh == 1 and kw == 1 and s == 1:
        cols = xp.transpose(1, 0, 2, 3).reshape(C, N * Ho * Wo)
    else:
        cols = np.empty((C, kh, kw, N, Ho, Wo), dtype=dtype)
        xt = xp.transpose(1, 0, 2, 3)
        for i in range(kh):
            for j in range(kw):
                cols[:, i, j] = xt[:, :, i : i + s * Ho : s, j : j + s * Wo : s]
        cols = cols.reshape(C * kh * kw, N * Ho * Wo)
    w2 = weight.data.reshape(Cout, C * kh * kw)
    out = (w2 @ cols).reshape(Cout, N, Ho, Wo).transpose(1, 0, 2, 3)
    out = np.ascontiguousarray(out)

    def backward(g):
        g2 = g.transpose(1, 0, 2, 3).reshape(Cout, N * Ho * Wo)
        gw = gx = None
        if weight.requires_grad:
            gw = (g2 @ cols.T).reshape(weight.shape)
        if x.requires_grad:
            gcols = (w2.T @ g2).reshape(C, kh, kw, N, Ho, Wo)
            gxp = np.zeros((C, N) + xp.shape[2:], dtype=dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + s * Ho : s, j : j + s * Wo : s] += gcols[:, i, j]
            gxp = gxp.transpose(1, 0, 2, 3)
            gx = gxp[:, :, p : p + H, p : p + W] if p else gxp
            gx = np.ascontiguousarray(gx)
        return gx, gw

    return Tensor._make(out, (x, weight), backward)


def _depthwise(x: Tensor, weight: Tensor, s: int, p: int) -> Tensor:
    N, C, H, W = x.shape
    _, _, kh, kw = weight.shape
    Ho = conv_output_size(H, kh, s, p)
    Wo = conv_output_size(W, kw, s, p)
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    wd = weight.data[:, 0]
    dtype = np.result_type(xp, wd)
    out = np.zeros((N, C, Ho, Wo), dtype=dtype)
    for i in range(kh):
        for j in range(kw):
            out += xp[:, :, i : i + s * Ho : s, j : j + s * Wo : s] * wd[None, :, i, j, None, None]

    def backward(g):
        gw = np.zeros((C, kh, kw), dtype=dtype) if weight.requires_grad else None
        gxp = np.zeros(xp.shape, dtype=dtype) if x.requires_grad else None
        for i in range(kh):
            for j in range(kw):
                sl = (slice(None), slice(None), slice(i, i + s * Ho, s), slice(j, j + s * Wo, s))
                if gw is not None:
                    gw[:, i, j] = np.einsum("nchw,nchw->c", g, xp[sl])
                if gxp is not None:
                    gxp[sl] += g * wd[None, :, i, j, None, None]
        gx = None
        if gxp is not None:
            gx = np.ascontiguousarray(gxp[:, :, p : p + H, p : p + W]) if p else gxp
        return gx, (gw[:, None] if gw is not None else None)

    return Tensor._make(out, (x, weight), backward)
