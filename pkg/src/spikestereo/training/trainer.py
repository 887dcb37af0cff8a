"""Surrogate-gradient training of :class:`StereoRestorer` on a manifest dataset."""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .. import autodiff as ad
from ..checkpoint import load_checkpoint, save_checkpoint
from ..data.manifest import Manifest
from ..network import StereoRestorer
from .losses import FeaturePyramid, LossConfig, l1_loss, perceptual_loss
from .metrics import psnr, stereo_scores
from .optim import AdamW, AdamWConfig, DivergenceError

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Loop settings. ``val_every=0`` disables periodic validation."""

    steps: int = 2000
    batch_size: int = 4
    crop: int = 32
    seed: int = 0
    val_every: int = 100
    val_limit: Optional[int] = None
    checkpoint_every: int = 500
    optim: AdamWConfig = field(default_factory=AdamWConfig)
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if isinstance(self.optim, dict):
            self.optim = AdamWConfig(**self.optim)
        if isinstance(self.loss, dict):
            self.loss = LossConfig(**self.loss)
        if self.steps < 0 or self.batch_size < 1 or self.crop < 1:
            raise ValueError("steps must be >= 0, batch_size and crop >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss"] = {k: list(v) for k, v in d["loss"].items()}
        return d


class PairDataset:
    """Degraded/clean stereo pairs held in memory as ``[N, 3, H, W]`` arrays."""

    def __init__(self, degraded_left, degraded_right, clean_left, clean_right):
        self.dl, self.dr = np.asarray(degraded_left), np.asarray(degraded_right)
        self.cl, self.cr = np.asarray(clean_left), np.asarray(clean_right)
        if len(self.dl) == 0:
            raise ValueError("dataset is empty")
        self.scale = self.cl.shape[-1] // self.dl.shape[-1]

    @classmethod
    def from_manifest(cls, manifest: Manifest, dtype=np.float32) -> "PairDataset":
        imgs = [manifest.load(e, dtype) for e in manifest]
        if not imgs:
            raise ValueError("manifest split has no entries")
        stack = lambda k: np.stack([d[k] for d in imgs])  # noqa: E731
        return cls(stack("degraded_left"), stack("degraded_right"), stack("clean_left"), stack("clean_right"))

    def __len__(self) -> int:
        return len(self.dl)

    def batch(self, rng: np.random.Generator, size: int, crop: int):
        """Random same-window crops of both views; ``crop`` is in input pixels."""
        idx = rng.integers(0, len(self), size=size)
        H, W = self.dl.shape[-2:]
        ch, cw = min(crop, H), min(crop, W)
        ys = rng.integers(0, H - ch + 1, size=size)
        xs = rng.integers(0, W - cw + 1, size=size)
        s = self.scale
        out = ([], [], [], [])
        for i, y, x in zip(idx, ys, xs):
            out[0].append(self.dl[i, :, y : y + ch, x : x + cw])
            out[1].append(self.dr[i, :, y : y + ch, x : x + cw])
            out[2].append(self.cl[i, :, y * s : (y + ch) * s, x * s : (x + cw) * s])
            out[3].append(self.cr[i, :, y * s : (y + ch) * s, x * s : (x + cw) * s])
        return tuple(np.stack(o) for o in out)


def compute_losses(model: StereoRestorer, dl, dr, cl, cr, loss_cfg: LossConfig, extractor: FeaturePyramid):
    """``L1(coarse)`` plus, when a refinement stage exists, ``Lp(refined)``.

    Returns ``(total, l1, lp)``; ``lp`` is ``None`` without refinement.
    """
    out = model(dl, dr)
    target = (cl, cr)
    if model.cfg.task == "superres":
        l1 = l1_loss(out.refined, target)
        return l1, l1, None
    l1 = l1_loss(out.coarse, target)
    if model.stage2 is None:
        return l1, l1, None
    lp = perceptual_loss(out.refined, target, loss_cfg, extractor)
    return l1 + lp, l1, lp


def restore_pairs(model: StereoRestorer, left: np.ndarray, right: np.ndarray, batch: int = 8):
    """Eval-mode inference over ``[N, 3, H, W]`` arrays, clipped to [0, 1]."""
    was_training = model.training
    model.eval()
    outs_l, outs_r = [], []
    try:
        with ad.no_grad():
            for i in range(0, len(left), batch):
                out = model(left[i : i + batch], right[i : i + batch])
                outs_l.append(np.clip(out.refined.left.data, 0, 1))
                outs_r.append(np.clip(out.refined.right.data, 0, 1))
    finally:
        model.train(was_training)
    return np.concatenate(outs_l), np.concatenate(outs_r)


def evaluate(model: StereoRestorer, data: PairDataset, limit: Optional[int] = None) -> dict:
    """Mean stereo PSNR/SSIM of restored output and of the degraded input."""
    n = len(data) if limit is None else min(limit, len(data))
    pl, pr = restore_pairs(model, data.dl[:n], data.dr[:n])
    rows = [stereo_scores(pl[i], pr[i], data.cl[i], data.cr[i]) for i in range(n)]
    result = {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}
    if data.scale == 1:
        result["psnr_input"] = float(
            np.mean([(psnr(data.dl[i], data.cl[i]) + psnr(data.dr[i], data.cr[i])) / 2 for i in range(n)])
        )
    return result


def validation_psnr(model: StereoRestorer, data: PairDataset, limit: Optional[int] = None) -> float:
    n = len(data) if limit is None else min(limit, len(data))
    pl, pr = restore_pairs(model, data.dl[:n], data.dr[:n])
    return float(np.mean([(psnr(pl[i], data.cl[i]) + psnr(pr[i], data.cr[i])) / 2 for i in range(n)]))


@dataclass
class TrainResult:
    model: StereoRestorer
    optimizer: AdamW
    step: int
    records: list
    checkpoint: Optional[str] = None


def _finite(x: float) -> bool:
    return bool(np.isfinite(x))


def train(
    data: PairDataset,
    model: StereoRestorer,
    cfg: Optional[TrainConfig] = None,
    val: Optional[PairDataset] = None,
    out_dir: Optional[str] = None,
    optimizer: Optional[AdamW] = None,
    start_step: int = 0,
    callback: Optional[Callable[[dict], None]] = None,
) -> TrainResult:
    """Run ``cfg.steps`` optimizer steps after ``start_step``.

    Each step draws a batch from an RNG keyed on ``(seed, step)``, so resumed
    runs see the same batches as uninterrupted ones. When ``out_dir`` is given,
    records are appended to ``train_log.jsonl`` and ``model.snir`` is written
    periodically and at the end. A non-finite loss or gradient saves the
    pre-step weights to ``last_good.snir`` (if ``out_dir``) and raises
    :class:`DivergenceError`.
    """
    cfg = cfg or TrainConfig()
    names, params = zip(*model.named_parameters())
    opt = optimizer or AdamW(params, cfg.optim, names)
    extractor = FeaturePyramid(dtype=model.dtype)
    model.train()
    records = []
    log_fh = None
    ckpt_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        log_fh = open(os.path.join(out_dir, "train_log.jsonl"), "a" if start_step else "w", encoding="utf-8")
        ckpt_path = os.path.join(out_dir, "model.snir")
    step = start_step
    t0 = time.time()
    try:
        for step in range(start_step + 1, start_step + cfg.steps + 1):
            rng = np.random.default_rng([cfg.seed, step])
            dl, dr, cl, cr = data.batch(rng, cfg.batch_size, cfg.crop)
            total, l1, lp = compute_losses(model, dl, dr, cl, cr, cfg.loss, extractor)
            loss_val = float(total.data)
            if not _finite(loss_val):
                _save_last_good(out_dir, model, step - 1, opt)
                raise DivergenceError(f"loss became {loss_val} at step {step}")
            opt.zero_grad()
            total.backward()
            try:
                opt.step()
            except DivergenceError:
                _save_last_good(out_dir, model, step - 1, opt)
                raise
            rec = {
                "step": step,
                "loss_l1": float(l1.data),
                "loss_p": None if lp is None else float(lp.data),
                "psnr_val": None,
            }
            if val is not None and cfg.val_every and step % cfg.val_every == 0:
                rec["psnr_val"] = validation_psnr(model, val, cfg.val_limit)
            records.append(rec)
            if log_fh is not None:
                log_fh.write(json.dumps(rec) + "\n")
                log_fh.flush()
            if callback is not None:
                callback(rec)
            if step % 50 == 0:
                log.info("step %d loss %.5f (%.2fs/step)", step, loss_val, (time.time() - t0) / (step - start_step))
            if ckpt_path and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
                save_checkpoint(ckpt_path, model, step, opt, {"train": cfg.to_dict()})
    finally:
        if log_fh is not None:
            log_fh.close()
    if ckpt_path:
        save_checkpoint(ckpt_path, model, step, opt, {"train": cfg.to_dict()})
    return TrainResult(model, opt, step, records, ckpt_path)


def _save_last_good(out_dir, model, step, opt) -> None:
    if out_dir is not None:
        save_checkpoint(os.path.join(out_dir, "last_good.snir"), model, step, opt)


def resume(path: str, cfg: Optional[TrainConfig] = None):
    """Load a checkpoint and its optimizer state; returns ``(model, optimizer, step)``."""
    model, info = load_checkpoint(path)
    cfg = cfg or TrainConfig()
    names, params = zip(*model.named_parameters())
    opt = AdamW(params, cfg.optim, names)
    if info["optimizer"]:
        opt.load_state_dict(info["optimizer"])
    return model, opt, info["step"]
