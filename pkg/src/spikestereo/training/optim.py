"""AdamW with decoupled weight decay and global-norm gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..autodiff import Parameter


class DivergenceError(FloatingPointError):
    """Non-finite gradient or loss encountered during training."""


@dataclass
class AdamWConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.99
    weight_decay: float = 1e-4
    eps: float = 1e-8
    clip_norm: Optional[float] = 1.0

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.lr < 0:
            raise ValueError("lr must be nonnegative")


class AdamW:
    def __init__(self, params: Sequence[Parameter], cfg: Optional[AdamWConfig] = None, names: Optional[Sequence[str]] = None):
        self.params = list(params)
        self.names = list(names) if names is not None else [str(i) for i in range(len(self.params))]
        self.cfg = cfg or AdamWConfig()
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def grad_norm(self) -> float:
        total = 0.0
        for p in self.params:
            if p.grad is not None:
                total += float(np.sum(np.square(p.grad, dtype=np.float64)))
        return float(np.sqrt(total))

    def step(self) -> float:
        """Apply one update; returns the pre-clipping global gradient norm."""
        for name, p in zip(self.names, self.params):
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                bad = int(np.size(p.grad) - np.count_nonzero(np.isfinite(p.grad)))
                raise DivergenceError(f"non-finite gradient in {name} ({bad} entries) at step {self.step_count + 1}")
        norm = self.grad_norm()
        c = self.cfg
        scale = 1.0
        if c.clip_norm is not None and norm > c.clip_norm:
            scale = c.clip_norm / (norm + 1e-12)
        self.step_count += 1
        t = self.step_count
        bc1 = 1 - c.beta1**t
        bc2 = 1 - c.beta2**t
        for p, m, v in zip(self.params, self.m, self.v):
            g = np.zeros_like(p.data) if p.grad is None else p.grad * scale
            p.data *= 1 - c.lr * c.weight_decay
            m *= c.beta1
            m += (1 - c.beta1) * g
            v *= c.beta2
            v += (1 - c.beta2) * g * g
            p.data -= c.lr * (m / bc1) / (np.sqrt(v / bc2) + c.eps)
        return norm

    def state_dict(self) -> dict:
        state = {"step": np.array([self.step_count], dtype=np.float64)}
        for name, m, v in zip(self.names, self.m, self.v):
            state[f"m.{name}"] = m
            state[f"v.{name}"] = v
        return state

    def load_state_dict(self, state: dict) -> None:
        self.step_count = int(np.asarray(state["step"]).ravel()[0])
        for i, name in enumerate(self.names):
            if f"m.{name}" in state:
                self.m[i] = np.asarray(state[f"m.{name}"], dtype=self.m[i].dtype).reshape(self.m[i].shape).copy()
                self.v[i] = np.asarray(state[f"v.{name}"], dtype=self.v[i].dtype).reshape(self.v[i].shape).copy()


def adamw_step(params: Sequence[Parameter], grads: Sequence[np.ndarray], state: AdamW) -> None:
    """Functional form: install ``grads`` on ``params`` and apply ``state``'s update."""
    for p, g in zip(params, grads):
        p.grad = g
    state.step()
