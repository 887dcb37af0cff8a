"""Dataset manifests and on-disk dataset generation.

A manifest is a JSON-lines file. Each line describes one stereo sample::

    {"index": 0, "split": "train",
     "clean_left": "train/0000_clean_L.png", "clean_right": "...",
     "degraded_left": "...", "degraded_right": "...",
     "scene": {SceneSpec fields}, "degradation": {DegradationSpec fields}}

Paths are relative to the manifest's directory. Regenerating from the stored
specs reproduces every PNG byte for byte.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from .degrade import DegradationSpec, degrade
from .io import load_png, save_png
from .scene import SceneSpec, generate_scene

TASK_DEGRADATION = {
    "raindrop": "raindrop",
    "rainstreak": "rainstreak",
    "lowlight": "lowlight",
    "superres": "downsample",
}

IMAGE_KEYS = ("clean_left", "clean_right", "degraded_left", "degraded_right")


class ManifestError(ValueError):
    pass


@dataclass
class Entry:
    index: int
    split: str
    paths: dict
    scene: SceneSpec
    degradation: DegradationSpec

    def to_dict(self) -> dict:
        d = {"index": self.index, "split": self.split}
        d.update(self.paths)
        d["scene"] = self.scene.to_dict()
        d["degradation"] = self.degradation.to_dict()
        return d


class Manifest:
    """Entries plus the directory their relative paths resolve against."""

    def __init__(self, entries: Sequence[Entry], root: str):
        self.entries = list(entries)
        self.root = root

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[Entry]:
        return iter(self.entries)

    def split(self, name: str) -> "Manifest":
        return Manifest([e for e in self.entries if e.split == name], self.root)

    def path(self, entry: Entry, key: str) -> str:
        return os.path.join(self.root, entry.paths[key])

    def load(self, entry: Entry, dtype=np.float32) -> dict:
        """Read the four images of ``entry``."""
        return {k: load_png(self.path(entry, k), dtype) for k in IMAGE_KEYS}

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for e in self.entries:
                fh.write(json.dumps(e.to_dict(), sort_keys=True) + "\n")


def read_manifest(path, check_files: bool = True) -> Manifest:
    """Parse a manifest; raises :class:`ManifestError` on malformed lines or missing files."""
    root = os.path.dirname(os.path.abspath(path))
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                paths = {k: d[k] for k in IMAGE_KEYS}
                entry = Entry(
                    int(d["index"]),
                    d.get("split", "train"),
                    paths,
                    SceneSpec.from_dict(d["scene"]),
                    DegradationSpec.from_dict(d["degradation"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ManifestError(f"{path}:{lineno}: malformed entry ({exc})") from exc
            if check_files:
                for k in IMAGE_KEYS:
                    if not os.path.isfile(os.path.join(root, paths[k])):
                        raise ManifestError(f"{path}:{lineno}: missing file {paths[k]}")
            entries.append(entry)
    return Manifest(entries, root)


def sample_seed(seed: int, index: int) -> int:
    """Independent per-sample seed derived from the run seed and sample index."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def default_splits(count: int) -> list[str]:
    """Assign splits in the ratio 10:1:1 (train:val:test), val/test at the end."""
    n_val = int(round(count / 12))
    n_test = int(round(count / 12))
    n_train = max(count - n_val - n_test, 0)
    return ["train"] * n_train + ["val"] * n_val + ["test"] * (count - n_train - n_val)


def render_entry(entry: Entry) -> dict:
    scene = generate_scene(entry.scene)
    deg = degrade(scene, entry.degradation)
    return {
        "clean_left": scene.left,
        "clean_right": scene.right,
        "degraded_left": deg.left,
        "degraded_right": deg.right,
    }


def generate_dataset(
    out_dir,
    task: str = "raindrop",
    count: int = 240,
    size: tuple = (64, 64),
    seed: int = 0,
    splits: Optional[Sequence[str]] = None,
    disparity_range: Optional[int] = None,
    degradation_params: Optional[dict] = None,
    manifest_name: str = "manifest.jsonl",
) -> str:
    """Render ``count`` samples under ``out_dir`` and write the manifest; returns its path."""
    if task not in TASK_DEGRADATION:
        raise ValueError(f"unknown task {task!r}; expected one of {tuple(TASK_DEGRADATION)}")
    if count < 0:
        raise ValueError("count must be >= 0")
    splits = list(splits) if splits is not None else default_splits(count)
    if len(splits) != count:
        raise ValueError("splits must have one label per sample")
    H, W = int(size[0]), int(size[1])
    if disparity_range is None:
        disparity_range = max(0, min(W // 10, (W - 1) // 4))
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for i in range(count):
        s = sample_seed(seed, i)
        scene = SceneSpec(seed=s, size=(H, W), disparity_range=disparity_range)
        deg = DegradationSpec(TASK_DEGRADATION[task], seed=s + 1 if s < 2**32 - 1 else 0, params=dict(degradation_params or {}))
        paths = {k: f"{splits[i]}/{i:04d}_{k}.png" for k in IMAGE_KEYS}
        entry = Entry(i, splits[i], paths, scene, deg)
        for k, img in render_entry(entry).items():
            save_png(os.path.join(out_dir, paths[k]), img)
        entries.append(entry)
    path = os.path.join(out_dir, manifest_name)
    Manifest(entries, os.path.abspath(out_dir)).write(path)
    return path
