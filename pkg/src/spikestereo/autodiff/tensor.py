"""Dense tensor with reverse-mode automatic differentiation.

Every differentiable operation produces a new :class:`Tensor` that remembers its
parents and a closure mapping the upstream gradient to one gradient per parent.
:meth:`Tensor.backward` walks that graph in reverse topological order.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_state = threading.local()


class ShapeError(ValueError):
    """Raised when operand shapes do not conform."""


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block."""
    prev = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


def _as_array(data, dtype=None) -> np.ndarray:
    if isinstance(data, Tensor):
        data = data.data
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype.kind not in "f":
        arr = arr.astype(np.float64)
    return arr


class Tensor:
    """N-dimensional real array with an optional gradient buffer.

    Args:
        data: array-like payload. Integer input is promoted to float64.
        requires_grad: whether gradients should be accumulated into ``grad``.
        dtype: optional numpy dtype override.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name", "__weakref__")

    # numpy should defer to our reflected operators
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str = ""):
        self.data = _as_array(data, dtype)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward: Optional[BackwardFn] = None
        self.name = name

    # -- graph construction -------------------------------------------------

    @classmethod
    def _make(cls, data: np.ndarray, parents: Iterable["Tensor"], backward: BackwardFn) -> "Tensor":
        out = cls.__new__(cls)
        Tensor.__init__(out, data)
        parents = tuple(parents)
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    # -- properties ---------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- backward -----------------------------------------------------------

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Populate ``grad`` on every leaf reachable from this scalar."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.dtype).reshape(self.shape)
        if not self.requires_grad:
            return

        order = _topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operator sugar (implementations live in functional) ----------------

    def __add__(self, other):
        from . import functional as F

        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import functional as F

        return F.sub(self, other)

    def __rsub__(self, other):
        from . import functional as F

        return F.sub(other, self)

    def __mul__(self, other):
        from . import functional as F

        return F.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import functional as F

        if isinstance(other, Tensor):
            return F.div(self, other)
        return F.mul(self, 1.0 / other)

    def __neg__(self):
        from . import functional as F

        return F.mul(self, -1.0)

    def __matmul__(self, other):
        from . import functional as F

        return F.matmul(self, other)

    def __getitem__(self, index):
        from . import functional as F

        return F.getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        from . import functional as F

        return F.sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import functional as F

        return F.mean_over_axis(self, axis, keepdims)

    def max(self, axis=None, keepdims=False):
        from . import functional as F

        return F.max_over_axis(self, axis, keepdims)

    def reshape(self, *shape):
        from . import functional as F

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def transpose(self, *axes):
        from . import functional as F

        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return F.transpose(self, axes or None)

    def abs(self):
        from . import functional as F

        return F.abs(self)


class Parameter(Tensor):
    """Leaf tensor that always requires gradients."""

    __slots__ = ()

    def __init__(self, data, dtype=None, name: str = ""):
        super().__init__(data, requires_grad=True, dtype=dtype, name=name)


def _topological_order(root: Tensor) -> list:
    order: list = []
    seen: set = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)
