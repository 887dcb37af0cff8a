"""Parameter containers."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .tensor import Parameter


class Module:
    """Base class that discovers parameters, buffers and children by attribute."""

    training: bool = True

    def __init__(self):
        self.training = True
        self._buffer_names: list[str] = []

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        if "_buffer_names" not in self.__dict__:
            self._buffer_names = []
        setattr(self, name, value)
        if name not in self._buffer_names:
            self._buffer_names.append(name)

    def children(self) -> Iterator[tuple[str, "Module"]]:
        for key, value in vars(self).items():
            if isinstance(value, Module):
                yield key, value

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, "Module"]]:
        yield prefix, self
        for key, child in self.children():
            yield from child.named_modules(f"{prefix}.{key}" if prefix else key)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, value in vars(self).items():
            name = f"{prefix}.{key}" if prefix else key
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name)

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for key in self.__dict__.get("_buffer_names", []):
            yield (f"{prefix}.{key}" if prefix else key), getattr(self, key)
        for key, child in self.children():
            yield from child.named_buffers(f"{prefix}.{key}" if prefix else key)

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def train(self, mode: bool = True) -> "Module":
        for _, m in self.named_modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.named_parameters()}
        state.update({name: np.asarray(b) for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        params = dict(self.named_parameters())
        owners = {}
        for mod_name, mod in self.named_modules():
            for key in mod.__dict__.get("_buffer_names", []):
                owners[f"{mod_name}.{key}" if mod_name else key] = (mod, key)
        missing = (set(params) | set(owners)) - set(state)
        unexpected = set(state) - set(params) - set(owners)
        if strict and (missing or unexpected):
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, value in state.items():
            if name in params:
                p = params[name]
                if p.shape != tuple(value.shape):
                    raise ValueError(f"shape mismatch for {name}: {p.shape} vs {value.shape}")
                p.data = np.asarray(value, dtype=p.dtype).copy()
            elif name in owners:
                mod, key = owners[name]
                current = getattr(mod, key)
                setattr(mod, key, np.asarray(value, dtype=current.dtype).copy())

    def modules_of(self, kind) -> list:
        return [m for _, m in self.named_modules() if isinstance(m, kind)]

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList(Module):
    """Ordered container of sub-modules addressable by index."""

    def __init__(self, modules=()):
        super().__init__()
        self._items: list[Module] = []
        for m in modules:
            self.append(m)

    def append(self, module: Module) -> None:
        setattr(self, str(len(self._items)), module)
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, i: int) -> Module:
        return self._items[i]
