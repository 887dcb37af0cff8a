"""Heaviside spike function with pluggable surrogate derivatives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from .tensor import Tensor


@dataclass(frozen=True)
class SurrogateSpec:
    """Shape of the pseudo-derivative used in place of the Dirac delta.

    ``arctan``: ``alpha / (2 * (1 + (pi * alpha * x / 2)**2))``.
    ``rectangular``: ``1 / alpha`` on ``|x| < alpha / 2``, zero elsewhere.

    Both integrate to one.
    """

    kind: Literal["arctan", "rectangular"] = "arctan"
    alpha: float = 2.0

    def __post_init__(self):
        if self.kind not in ("arctan", "rectangular"):
            raise ValueError(f"unknown surrogate kind {self.kind!r}")
        if not self.alpha > 0:
            raise ValueError("surrogate alpha must be positive")

    def derivative(self, x: np.ndarray) -> np.ndarray:
        a = self.alpha
        if self.kind == "arctan":
            return a / (2.0 * (1.0 + (np.pi * a * x / 2.0) ** 2))
        return (np.abs(x) < a / 2.0).astype(x.dtype) / a

    def primitive(self, x: np.ndarray) -> np.ndarray:
        """Smooth step whose derivative is :meth:`derivative` (used by gradient oracles)."""
        a = self.alpha
        if self.kind == "arctan":
            return np.arctan(np.pi * a * x / 2.0) / np.pi + 0.5
        return np.clip(x / a + 0.5, 0.0, 1.0)


DEFAULT_SURROGATE = SurrogateSpec()


class SpikeTensor(Tensor):
    """Tensor whose payload is exactly 0.0 or 1.0, leading axis is time."""

    __slots__ = ("_ones",)

    @property
    def ones(self) -> int:
        cached = getattr(self, "_ones", None)
        if cached is None:
            cached = int(np.count_nonzero(self.data))
            self._ones = cached
        return cached

    @property
    def firing_rate(self) -> float:
        return self.ones / self.data.size if self.data.size else 0.0


def as_spikes(data: np.ndarray) -> SpikeTensor:
    out = SpikeTensor.__new__(SpikeTensor)
    Tensor.__init__(out, data)
    out._ones = None
    return out


def check_finite(x: np.ndarray, what: str = "input") -> None:
    if np.isnan(x).any():
        raise ValueError(f"NaN found in spike {what}")


def heaviside(x: Tensor, surrogate: Optional[SurrogateSpec] = None) -> SpikeTensor:
    """Step function with ``theta(0) = 1``; backward uses ``surrogate``."""
    sg = surrogate or DEFAULT_SURROGATE
    xd = x.data
    check_finite(xd)
    spikes = (xd >= 0).astype(xd.dtype)

    def backward(g):
        return (g * sg.derivative(xd),)

    out = SpikeTensor._make(spikes, (x,), backward)
    out._ones = None
    return out
