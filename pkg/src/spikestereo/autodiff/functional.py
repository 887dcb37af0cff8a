"""Differentiable primitives on :class:`Tensor`.

Binary element-wise operations follow numpy broadcasting; the network only
relies on per-channel ``[.., C, 1, 1]`` and per-pixel ``[.., 1, H, W]``
broadcasts, but any numpy-compatible broadcast is accepted and reduced
correctly in the backward pass.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .tensor import Tensor, ShapeError


def _t(x, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_check(a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"cannot broadcast shapes {a.shape} and {b.shape}") from exc


# ---------------------------------------------------------------------------
# element-wise arithmetic


def add(a, b) -> Tensor:
    a = _t(a)
    b = _t(b, a)
    _broadcast_check(a, b)
    sa, sb = a.shape, b.shape

    def backward(g):
        return unbroadcast(g, sa), unbroadcast(g, sb)

    return Tensor._make(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a = _t(a)
    b = _t(b, a)
    _broadcast_check(a, b)
    sa, sb = a.shape, b.shape

    def backward(g):
        return unbroadcast(g, sa), unbroadcast(-g, sb)

    return Tensor._make(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a = _t(a)
    if not isinstance(b, Tensor):
        c = float(b)

        def backward_scalar(g):
            return (g * c,)

        return Tensor._make(a.data * c, (a,), backward_scalar)
    _broadcast_check(a, b)
    ad, bd = a.data, b.data

    def backward(g):
        ga = unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._make(ad * bd, (a, b), backward)


def div(a, b) -> Tensor:
    a = _t(a)
    b = _t(b, a)
    _broadcast_check(a, b)
    ad, bd = a.data, b.data
    out = ad / bd

    def backward(g):
        ga = unbroadcast(g / bd, ad.shape) if a.requires_grad else None
        gb = unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._make(out, (a, b), backward)


def abs(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    sign = np.sign(x.data)
    return Tensor._make(np.abs(x.data), (x,), lambda g: (g * sign,))


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return Tensor._make(out, (x,), lambda g: (g * 0.5 / out,))


def square(x: Tensor) -> Tensor:
    xd = x.data
    return Tensor._make(xd * xd, (x,), lambda g: (2.0 * g * xd,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor._make(np.where(mask, x.data, 0.0).astype(x.dtype), (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-x.data))
    return Tensor._make(out, (x,), lambda g: (g * out * (1.0 - out),))


# ---------------------------------------------------------------------------
# reductions


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _norm_axis(axis, x.ndim)
    shape = x.shape
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape),)

    return Tensor._make(np.asarray(out), (x,), backward)


def mean_over_axis(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    """Arithmetic mean; reductions accumulate in float64."""
    axes = _norm_axis(axis, x.ndim)
    shape = x.shape
    count = 1
    for a in axes:
        count *= shape[a]
    out = x.data.mean(axis=axes, keepdims=keepdims, dtype=np.float64).astype(x.dtype)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, shape),)

    return Tensor._make(np.asarray(out), (x,), backward)


def max_over_axis(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    """Maximum; ties share the upstream gradient equally."""
    axes = _norm_axis(axis, x.ndim)
    out_k = x.data.max(axis=axes, keepdims=True)
    out = out_k if keepdims else np.squeeze(out_k, axis=axes)

    def backward(g):
        mask = (x.data == out_k).astype(x.dtype)
        mask /= mask.sum(axis=axes, keepdims=True)
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (mask * g,)

    return Tensor._make(np.asarray(out), (x,), backward)


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(x: Tensor, shape) -> Tensor:
    src = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {src} into {tuple(shape)}") from exc
    return Tensor._make(out, (x,), lambda g: (g.reshape(src),))


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = np.argsort(axes)
    return Tensor._make(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def getitem(x: Tensor, index) -> Tensor:
    shape, dtype = x.shape, x.dtype

    def backward(g):
        full = np.zeros(shape, dtype=dtype)
        if _needs_add_at(index):
            np.add.at(full, index, g)
        else:
            full[index] = g
        return (full,)

    return Tensor._make(x.data[index], (x,), backward)


def _needs_add_at(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_t(t) for t in tensors]
    ref = tensors[0]
    axis = axis % ref.ndim
    for t in tensors[1:]:
        if t.ndim != ref.ndim:
            raise ShapeError(f"concat rank mismatch: {ref.shape} vs {t.shape}")
        for ax in range(ref.ndim):
            if ax != axis and t.shape[ax] != ref.shape[ax]:
                raise ShapeError(f"concat axis {ax} mismatch: {ref.shape[ax]} vs {t.shape[ax]}")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        sl = [slice(None)] * g.ndim
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            sl[axis] = slice(lo, hi)
            out.append(g[tuple(sl)])
        return out

    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_t(t) for t in tensors]
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors]
    return concat(expanded, axis=axis)


def split(x: Tensor, sections: int, axis: int = 0) -> list:
    """Split into ``sections`` equal chunks along ``axis``."""
    axis = axis % x.ndim
    n = x.shape[axis]
    if n % sections:
        raise ShapeError(f"axis {axis} of length {n} is not divisible into {sections} parts")
    step = n // sections
    out = []
    for i in range(sections):
        sl = [slice(None)] * x.ndim
        sl[axis] = slice(i * step, (i + 1) * step)
        out.append(getitem(x, tuple(sl)))
    return out


def pad(x: Tensor, pad_hw: int | tuple, mode: str = "constant") -> Tensor:
    """Pad the last two axes; ``mode`` is ``constant`` (zeros) or ``reflect``."""
    if isinstance(pad_hw, int):
        pt = pb = pl = pr = pad_hw
    elif len(pad_hw) == 2:
        pt = pb = pad_hw[0]
        pl = pr = pad_hw[1]
    else:
        pt, pb, pl, pr = pad_hw
    widths = [(0, 0)] * (x.ndim - 2) + [(pt, pb), (pl, pr)]
    if mode == "constant":
        out = np.pad(x.data, widths)
        H, W = x.shape[-2:]

        def backward(g):
            return (g[..., pt : pt + H, pl : pl + W],)

        return Tensor._make(out, (x,), backward)
    if mode == "reflect":
        H, W = x.shape[-2:]
        rows = np.pad(np.arange(H), (pt, pb), mode="reflect")
        cols = np.pad(np.arange(W), (pl, pr), mode="reflect")
        out = x.data[..., rows[:, None], cols[None, :]]

        def backward_reflect(g):
            full = np.zeros(x.shape, dtype=x.dtype)
            np.add.at(full, (Ellipsis, rows[:, None], cols[None, :]), g)
            return (full,)

        return Tensor._make(out, (x,), backward_reflect)
    raise ValueError(f"unknown pad mode {mode!r}")


def nearest_upsample(x: Tensor, factor: int = 2) -> Tensor:
    """Duplicate each pixel of the last two axes into a ``factor``x``factor`` block."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    lead, (H, W) = x.shape[:-2], x.shape[-2:]
    data = x.data.reshape(lead + (H, 1, W, 1))
    out = np.broadcast_to(data, lead + (H, factor, W, factor)).reshape(lead + (H * factor, W * factor))

    def backward(g):
        return (g.reshape(lead + (H, factor, W, factor)).sum(axis=(-3, -1)),)

    return Tensor._make(out, (x,), backward)


def pixel_shuffle(x: Tensor, scale: int) -> Tensor:
    """Rearrange ``[.., C*s*s, H, W]`` into ``[.., C, H*s, W*s]``."""
    lead = x.shape[:-3]
    C2, H, W = x.shape[-3:]
    if C2 % (scale * scale):
        raise ShapeError(f"channel axis {C2} not divisible by scale^2={scale * scale}")
    C = C2 // (scale * scale)
    k = len(lead)
    y = reshape(x, lead + (C, scale, scale, H, W))
    perm = tuple(range(k)) + (k, k + 3, k + 1, k + 4, k + 2)
    y = transpose(y, perm)
    return reshape(y, lead + (C, H * scale, W * scale))


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes."""
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        if b.requires_grad:
            gb = unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    return Tensor._make(ad @ bd, (a, b), backward)


def linear(x: Tensor, weight: Tensor) -> Tensor:
    """``x @ weight.T`` for ``weight`` of shape ``[out, in]``."""
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear expects last axis {weight.shape[1]}, got {x.shape[-1]}")
    return matmul(x, transpose(weight, (1, 0)))
