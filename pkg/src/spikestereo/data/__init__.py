"""Synthetic stereo degradation data, PNG I/O and manifests."""

from .degrade import DEFAULTS, KINDS, Degraded, DegradationSpec, degrade
from .io import DecodeError, load_png, save_png
from .manifest import Manifest, ManifestError, generate_dataset, read_manifest, render_entry
from .scene import Scene, SceneSpec, generate_scene

__all__ = [
    "DEFAULTS",
    "KINDS",
    "DecodeError",
    "Degraded",
    "DegradationSpec",
    "Manifest",
    "ManifestError",
    "Scene",
    "SceneSpec",
    "degrade",
    "generate_dataset",
    "generate_scene",
    "load_png",
    "read_manifest",
    "render_entry",
    "save_png",
]
