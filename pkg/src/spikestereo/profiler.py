"""Operation counting and energy estimation.

Dense layers are charged one multiply-accumulate (4.6 pJ) per MAC. Layers fed
by a spike train are charged one accumulate (0.9 pJ) per synaptic operation,
where ``SOPs = T * firing_rate * dense_MACs_per_step``, i.e. the dense cost
scaled by the number of ones actually present in the input.
"""

from __future__ import annotations

import contextlib
import contextvars
import json
from dataclasses import dataclass, asdict
from typing import Iterator, Optional

import numpy as np

from .autodiff.surrogate import SpikeTensor

E_AC_PJ = 0.9
E_MAC_PJ = 4.6

_ACTIVE: contextvars.ContextVar[Optional["EnergyLedger"]] = contextvars.ContextVar("ledger", default=None)


class RecordingError(RuntimeError):
    pass


@dataclass
class LayerRecord:
    name: str
    kind: str  # "spike" or "float"
    op: str = "conv"
    flops_dense: float = 0.0
    spikes_in: int = 0
    elements_in: int = 0
    sop_count: float = 0.0
    flops: float = 0.0
    binary_verified: bool = True
    calls: int = 0

    @property
    def firing_rate(self) -> float:
        return self.spikes_in / self.elements_in if self.elements_in else 0.0


@dataclass
class EnergyReport:
    total_flops: float  # G, per sample
    total_sops: float  # G, per sample
    energy_mj: float
    samples: int
    layers: list
    sfr_per_block: list

    def to_dict(self) -> dict:
        return {
            "flops_g": self.total_flops,
            "sops_g": self.total_sops,
            "energy_mj": self.energy_mj,
            "samples": self.samples,
            "layers": self.layers,
            "sfr_per_block": [{"block": n, "rate": r} for n, r in self.sfr_per_block],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [
            f"samples      {self.samples}",
            f"FLOPs (G)    {self.total_flops:.6f}",
            f"SOPs (G)     {self.total_sops:.6f}",
            f"energy (mJ)  {self.energy_mj:.6f}",
            "",
            f"{'layer':<48} {'kind':<6} {'op':<7} {'fr':>7} {'SOPs':>14} {'FLOPs':>14}",
        ]
        for rec in self.layers:
            lines.append(
                f"{rec['name']:<48} {rec['kind']:<6} {rec['op']:<7} {rec['firing_rate']:7.4f} "
                f"{rec['sop_count']:14.0f} {rec['flops']:14.0f}"
            )
        return "\n".join(lines) + "\n"


def energy(total_sops_g: float, total_flops_g: float) -> float:
    """Energy in mJ for per-sample SOP and FLOP totals given in G (1e9)."""
    if total_sops_g < 0 or total_flops_g < 0:
        raise ValueError("operation counts must be nonnegative")
    # G ops * pJ = 1e9 * 1e-12 J = 1 mJ
    return E_AC_PJ * total_sops_g + E_MAC_PJ * total_flops_g


def dense_flops_of(kind: str, **dims) -> int:
    """Dense MAC count of one layer application on one frame.

    ``conv``: cout, cin, kh, kw, hout, wout, groups (default 1).
    ``linear``: fan_in, fan_out.
    ``attention``: rows, width, channels; counts both ``Q K^T`` and ``A V``.
    ``elementwise``: elements.
    """
    if kind == "conv":
        groups = dims.get("groups", 1)
        return dims["cout"] * dims["cin"] // groups * dims["kh"] * dims["kw"] * dims["hout"] * dims["wout"]
    if kind == "linear":
        return dims["fan_in"] * dims["fan_out"]
    if kind == "attention":
        r, w, c = dims["rows"], dims["width"], dims["channels"]
        return r * (w * w * c + w * c * w)
    if kind == "elementwise":
        return dims["elements"]
    raise ValueError(f"unknown layer kind {kind!r}")


class EnergyLedger:
    """Accumulates per-layer operation counts over one or more forward passes."""

    def __init__(self, record_sfr: bool = False):
        self.entries: dict[str, LayerRecord] = {}
        self.sample_count = 0
        self.record_sfr = record_sfr
        self.sfr_maps: dict[str, list[np.ndarray]] = {}

    # -- activation ----------------------------------------------------------

    @contextlib.contextmanager
    def active(self) -> Iterator["EnergyLedger"]:
        token = _ACTIVE.set(self)
        try:
            yield self
        finally:
            _ACTIVE.reset(token)

    def add_samples(self, n: int) -> None:
        self.sample_count += n

    # -- recording -------------------------------------------------------------

    def _entry(self, name: str, kind: str, op: str) -> LayerRecord:
        rec = self.entries.get(name)
        if rec is None:
            rec = LayerRecord(name=name, kind=kind, op=op)
            self.entries[name] = rec
        elif rec.kind != kind:
            raise RecordingError(f"layer {name} recorded as both {rec.kind} and {kind}")
        return rec

    def record(
        self,
        name: str,
        kind: str,
        dense_flops: float,
        spike_input: Optional[SpikeTensor] = None,
        op: str = "conv",
        steps: int = 1,
    ) -> LayerRecord:
        """Append one layer application.

        For ``spike`` layers ``dense_flops`` is the MAC count of one time step
        and ``spike_input`` must be the [T, ...] binary input. For ``float``
        layers the charged FLOPs are ``dense_flops * steps``.
        """
        if kind == "spike":
            if spike_input is None:
                raise RecordingError(f"spike layer {name} recorded without a spike input")
            data = spike_input.data
            T = data.shape[0]
            ones = spike_input.ones if isinstance(spike_input, SpikeTensor) else int(np.count_nonzero(data))
            binary = bool(ones + int(np.count_nonzero(data == 0)) == data.size)
            rec = self._entry(name, kind, op)
            rec.flops_dense += dense_flops * T
            rec.spikes_in += ones
            rec.elements_in += data.size
            rec.sop_count += T * (ones / data.size) * dense_flops
            rec.binary_verified = rec.binary_verified and binary
            rec.calls += 1
            if self.record_sfr:
                self.sfr_maps.setdefault(name, []).append(sfr_map(data))
        elif kind == "float":
            if spike_input is not None:
                raise RecordingError(f"float layer {name} given a spike payload")
            rec = self._entry(name, kind, op)
            rec.flops_dense += dense_flops * steps
            rec.flops += dense_flops * steps
            rec.calls += 1
        else:
            raise RecordingError(f"unknown layer kind {kind!r}")
        return rec

    # -- aggregation -----------------------------------------------------------

    def merge(self, other: "EnergyLedger") -> "EnergyLedger":
        out = EnergyLedger(record_sfr=self.record_sfr or other.record_sfr)
        for src in (self, other):
            for name, rec in src.entries.items():
                dst = out.entries.get(name)
                if dst is None:
                    out.entries[name] = LayerRecord(**asdict(rec))
                    continue
                dst.flops_dense += rec.flops_dense
                dst.spikes_in += rec.spikes_in
                dst.elements_in += rec.elements_in
                dst.sop_count += rec.sop_count
                dst.flops += rec.flops
                dst.binary_verified = dst.binary_verified and rec.binary_verified
                dst.calls += rec.calls
            for name, maps in src.sfr_maps.items():
                out.sfr_maps.setdefault(name, []).extend(maps)
        out.sample_count = self.sample_count + other.sample_count
        return out

    @property
    def total_spikes(self) -> int:
        return sum(r.spikes_in for r in self.entries.values())

    @property
    def total_sops(self) -> float:
        return sum(r.sop_count for r in self.entries.values())

    @property
    def total_flops(self) -> float:
        return sum(r.flops for r in self.entries.values())

    def float_layers(self, op: Optional[str] = None) -> list[LayerRecord]:
        return [r for r in self.entries.values() if r.kind == "float" and (op is None or r.op == op)]

    def spike_layers(self) -> list[LayerRecord]:
        return [r for r in self.entries.values() if r.kind == "spike"]

    def report(self) -> EnergyReport:
        n = max(self.sample_count, 1)
        sops_g = self.total_sops / n / 1e9
        flops_g = self.total_flops / n / 1e9
        layers = []
        for r in self.entries.values():
            d = asdict(r)
            d["firing_rate"] = r.firing_rate
            layers.append(d)
        return EnergyReport(
            total_flops=flops_g,
            total_sops=sops_g,
            energy_mj=energy(sops_g, flops_g),
            samples=self.sample_count,
            layers=layers,
            sfr_per_block=sfr_curve(self),
        )


def active_ledger() -> Optional[EnergyLedger]:
    return _ACTIVE.get()


def record_layer(
    ledger: Optional[EnergyLedger],
    name: str,
    kind: str,
    dense_flops: float,
    spike_input: Optional[SpikeTensor] = None,
    op: str = "conv",
    steps: int = 1,
) -> None:
    """Record into ``ledger`` (or the active ledger when ``None``); no-op if neither exists."""
    ledger = ledger or _ACTIVE.get()
    if ledger is not None:
        ledger.record(name, kind, dense_flops, spike_input, op=op, steps=steps)


def sfr_map(spikes: np.ndarray) -> np.ndarray:
    """Per-pixel firing rate ``[B, H, W]`` of a ``[T, B, C, H, W]`` (or ``[T, C, H, W]``) spike train.

    Averages over time and channels.
    """
    data = spikes.data if isinstance(spikes, SpikeTensor) else np.asarray(spikes)
    if data.ndim == 4:
        data = data[:, None]
    return data.mean(axis=(0, 2), dtype=np.float64)


def sfr_maps_for(ledger: EnergyLedger, name: str) -> np.ndarray:
    if not ledger.record_sfr:
        raise RecordingError("SFR recording is disabled for this ledger")
    if name not in ledger.sfr_maps:
        raise KeyError(f"no SFR map recorded for block {name!r}")
    return np.concatenate(ledger.sfr_maps[name], axis=0)


def sfr_curve(ledger: EnergyLedger) -> list[tuple[str, float]]:
    """Mean firing rate of every spike layer in network order."""
    return [(r.name, r.firing_rate) for r in ledger.entries.values() if r.kind == "spike"]


def blue_white_red(values: np.ndarray) -> np.ndarray:
    """Map values in [0, 1] to 8-bit RGB: 0 blue, 0.5 white, 1 red."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    lo = np.clip(2 * v, 0, 1)
    hi = np.clip(2 * v - 1, 0, 1)
    r = np.where(v < 0.5, lo, 1.0)
    g = np.where(v < 0.5, lo, 1.0 - hi)
    b = np.where(v < 0.5, 1.0, 1.0 - hi)
    rgb = np.stack([r, g, b], axis=-1)
    return np.floor(rgb * 255 + 0.5).astype(np.uint8)


def save_heatmap(path, values: np.ndarray) -> None:
    """Write a 2-D map in [0, 1] as an 8-bit blue-white-red PNG."""
    import os

    from PIL import Image

    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
    Image.fromarray(blue_white_red(values)).save(path)
