"""Minimal numpy tensor engine with reverse-mode differentiation."""

from .tensor import Tensor, Parameter, ShapeError, no_grad, is_grad_enabled, tensor
from .conv import conv2d, conv_output_size
from .surrogate import SurrogateSpec, SpikeTensor, heaviside, as_spikes, DEFAULT_SURROGATE
from .functional import (
    add,
    sub,
    mul,
    div,
    abs,
    sqrt,
    square,
    relu,
    sigmoid,
    sum,
    mean_over_axis,
    max_over_axis,
    reshape,
    transpose,
    getitem,
    concat,
    stack,
    split,
    pad,
    nearest_upsample,
    pixel_shuffle,
    matmul,
    linear,
)
from .module import Module, ModuleList

__all__ = [
    "Tensor",
    "Parameter",
    "ShapeError",
    "no_grad",
    "is_grad_enabled",
    "tensor",
    "conv2d",
    "conv_output_size",
    "SurrogateSpec",
    "SpikeTensor",
    "heaviside",
    "as_spikes",
    "DEFAULT_SURROGATE",
    "add",
    "sub",
    "mul",
    "div",
    "abs",
    "sqrt",
    "square",
    "relu",
    "sigmoid",
    "sum",
    "mean_over_axis",
    "max_over_axis",
    "reshape",
    "transpose",
    "getitem",
    "concat",
    "stack",
    "split",
    "pad",
    "nearest_upsample",
    "pixel_shuffle",
    "matmul",
    "linear",
    "Module",
    "ModuleList",
]
