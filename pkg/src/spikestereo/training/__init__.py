"""Losses, optimizer, metrics and the training loop."""

from .losses import FeaturePyramid, LossConfig, l1_loss, perceptual_loss
from .metrics import psnr, ssim, stereo_scores
from .optim import AdamW, AdamWConfig, DivergenceError, adamw_step
from .trainer import PairDataset, TrainConfig, TrainResult, evaluate, restore_pairs, resume, train, validation_psnr

__all__ = [
    "AdamW",
    "AdamWConfig",
    "DivergenceError",
    "FeaturePyramid",
    "LossConfig",
    "PairDataset",
    "TrainConfig",
    "TrainResult",
    "adamw_step",
    "evaluate",
    "l1_loss",
    "perceptual_loss",
    "psnr",
    "resume",
    "restore_pairs",
    "ssim",
    "stereo_scores",
    "train",
    "validation_psnr",
]
