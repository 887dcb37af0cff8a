"""Command-line front end: ``spikestereo <command> [flags]``.

Commands: ``gen-data``, ``train``, ``infer``, ``profile``, ``eval``. Every
command writes its artifacts and a ``resolved_config.json`` echo under
``--out``. Exit codes: 0 success, 2 configuration error, 3 I/O error,
4 numeric divergence.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from typing import Optional, Sequence

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, load_config, save_checkpoint, save_config
from .data import DecodeError, ManifestError, generate_dataset, load_png, read_manifest, save_png
from .network import NetworkConfig, StereoRestorer
from .profiler import EnergyLedger, save_heatmap, sfr_maps_for
from .training import (
    DivergenceError,
    PairDataset,
    TrainConfig,
    resume,
    stereo_scores,
    train,
)
from .training.trainer import restore_pairs

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIVERGENCE = 4

log = logging.getLogger("spikestereo")


class ConfigError(ValueError):
    pass


def _threads(n: Optional[int]):
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _write_resolved(out: str, args: argparse.Namespace, extra: Optional[dict] = None) -> None:
    os.makedirs(out, exist_ok=True)
    d = {k: v for k, v in vars(args).items() if k != "func"}
    if extra:
        d.update(extra)
    save_config(os.path.join(out, "resolved_config.json"), d)


def _size(text: str) -> tuple:
    parts = text.lower().replace("x", ",").split(",")
    try:
        vals = [int(p) for p in parts if p]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid size {text!r}") from None
    if len(vals) == 1:
        vals = vals * 2
    if len(vals) != 2 or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"invalid size {text!r}")
    return tuple(vals)


# ---------------------------------------------------------------- gen-data


def cmd_gen_data(args) -> int:
    path = generate_dataset(args.out, task=args.task, count=args.count, size=args.size, seed=args.seed)
    _write_resolved(args.out, args, {"manifest": os.path.basename(path)})
    print(f"wrote {args.count} samples to {path}")
    return EXIT_OK


# ---------------------------------------------------------------- train


def _split_config(overlay: dict) -> tuple[dict, dict]:
    """Separate a config file into network and training sections.

    Accepts ``{"network": {...}, "train": {...}}`` or a flat object whose
    keys are :class:`NetworkConfig` fields.
    """
    if "network" in overlay or "train" in overlay:
        unknown = set(overlay) - {"network", "train"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        return dict(overlay.get("network", {})), dict(overlay.get("train", {}))
    return dict(overlay), {}


def cmd_train(args) -> int:
    net_d, train_d = ({}, {})
    if args.config:
        net_d, train_d = _split_config(load_config(args.config))
    # flags override the file
    for key in ("steps", "batch_size", "crop", "seed", "val_every"):
        val = getattr(args, key)
        if val is not None:
            train_d[key] = val
    if args.lr is not None:
        train_d.setdefault("optim", {})["lr"] = args.lr
    if args.task is not None:
        net_d["task"] = args.task
    if args.tiny:
        net_d.setdefault("channels", [8, 16, 24, 32, 40])
        net_d.setdefault("T", 2)
        net_d.setdefault("refine_channels", 16)
    if "seed" in train_d:
        net_d.setdefault("seed", train_d["seed"])
    try:
        tcfg = TrainConfig(**train_d)
        ncfg = NetworkConfig.from_dict(net_d)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc

    manifest = read_manifest(args.manifest)
    data = PairDataset.from_manifest(manifest.split("train") if manifest.split("train").entries else manifest)
    val_split = manifest.split("val")
    val = PairDataset.from_manifest(val_split) if val_split.entries else None

    if args.resume:
        model, opt, start = resume(args.resume, tcfg)
    else:
        model, opt, start = StereoRestorer(ncfg), None, 0
    _write_resolved(args.out, args, {"network": model.cfg.to_dict(), "train": tcfg.to_dict()})
    if tcfg.steps == 0 and not args.resume:
        open(os.path.join(args.out, "train_log.jsonl"), "w").close()
        save_checkpoint(os.path.join(args.out, "model.snir"), model, 0)
        print("saved initial weights")
        return EXIT_OK
    result = train(data, model, tcfg, val=val, out_dir=args.out, optimizer=opt, start_step=start)
    last = result.records[-1] if result.records else {}
    print(f"trained to step {result.step}; last record {json.dumps(last)}")
    return EXIT_OK


# ---------------------------------------------------------------- infer / profile


def _load_pair(left: str, right: str):
    lft, rgt = load_png(left), load_png(right)
    if lft.shape != rgt.shape:
        raise ConfigError(f"left/right sizes differ: {lft.shape} vs {rgt.shape}")
    return lft, rgt


def cmd_infer(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    lft, rgt = _load_pair(args.left, args.right)
    pl, pr = restore_pairs(model, lft[None], rgt[None])
    os.makedirs(args.out, exist_ok=True)
    save_png(os.path.join(args.out, "restored_left.png"), pl[0])
    save_png(os.path.join(args.out, "restored_right.png"), pr[0])
    _write_resolved(args.out, args, {"network": model.cfg.to_dict()})
    print(f"restored pair {pl[0].shape[-2]}x{pl[0].shape[-1]} written to {args.out}")
    return EXIT_OK


def cmd_profile(args) -> int:
    from . import autodiff as ad

    model, _ = load_checkpoint(args.checkpoint)
    lft, rgt = _load_pair(args.left, args.right)
    model.eval()
    ledger = EnergyLedger(record_sfr=args.sfr)
    with ledger.active(), ad.no_grad():
        model(lft, rgt)
    report = ledger.report()
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    with open(os.path.join(args.out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(report.to_text())
    n_maps = 0
    if args.sfr:
        sfr_dir = os.path.join(args.out, "sfr")
        for name in ledger.sfr_maps:
            maps = sfr_maps_for(ledger, name)
            # layers fed both views hold [left, right]; cross-view units hold one map
            if maps.shape[0] == 2:
                views = (("left", maps[0]), ("right", maps[1]))
            else:
                views = (("view", maps.mean(axis=0)),)
            for view, m in views:
                save_heatmap(os.path.join(sfr_dir, f"{name}_{view}.png"), m)
                n_maps += 1
    _write_resolved(args.out, args, {"network": model.cfg.to_dict()})
    print(f"FLOPs {report.total_flops:.6f} G  SOPs {report.total_sops:.6f} G  energy {report.energy_mj:.6f} mJ")
    if args.sfr:
        print(f"{n_maps} firing-rate heatmaps in {os.path.join(args.out, 'sfr')}")
    return EXIT_OK


# ---------------------------------------------------------------- eval


def cmd_eval(args) -> int:
    manifest = read_manifest(args.manifest)
    if args.split:
        manifest = manifest.split(args.split)
    if not manifest.entries:
        raise ConfigError("no manifest entries to evaluate")
    model = None
    if args.checkpoint:
        model, _ = load_checkpoint(args.checkpoint)
    rows = []
    for entry in manifest:
        imgs = manifest.load(entry)
        if model is None:
            pl, pr = imgs["degraded_left"], imgs["degraded_right"]
        else:
            out_l, out_r = restore_pairs(model, imgs["degraded_left"][None], imgs["degraded_right"][None])
            pl, pr = out_l[0], out_r[0]
        scores = stereo_scores(pl, pr, imgs["clean_left"], imgs["clean_right"])
        rows.append({"index": entry.index, "split": entry.split, **scores})
    keys = [k for k in rows[0] if k not in ("index", "split")]
    mean = {"index": "mean", "split": args.split or "all", **{k: float(np.mean([r[k] for r in rows])) for k in keys}}
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "metrics.json"), "w", encoding="utf-8") as fh:
        json.dump({"rows": rows, "mean": mean}, fh, indent=2)
        fh.write("\n")
    with open(os.path.join(args.out, "metrics.tsv"), "w", encoding="utf-8") as fh:
        fh.write("\t".join(["index", "split"] + keys) + "\n")
        for r in rows + [mean]:
            fh.write("\t".join([str(r["index"]), str(r["split"])] + [f"{r[k]:.6f}" for k in keys]) + "\n")
    _write_resolved(args.out, args)
    print(f"PSNR {mean['psnr']:.3f} dB  SSIM {mean['ssim']:.4f}  over {len(rows)} pairs")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spikestereo", description="Spiking stereo image restoration")
    p.add_argument("--threads", type=int, default=None, help="cap BLAS worker threads")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="render a synthetic stereo dataset")
    g.add_argument("--task", default="raindrop", choices=["raindrop", "rainstreak", "lowlight", "superres"])
    g.add_argument("--count", type=int, default=240)
    g.add_argument("--size", type=_size, default=(64, 64), help="H,W or a single side")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model on a manifest")
    t.add_argument("--manifest", required=True)
    t.add_argument("--config", help="JSON config file; flags take precedence")
    t.add_argument("--steps", type=int)
    t.add_argument("--batch-size", type=int, dest="batch_size")
    t.add_argument("--crop", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--val-every", type=int, dest="val_every")
    t.add_argument("--task", choices=["raindrop", "rainstreak", "lowlight", "superres"])
    t.add_argument("--tiny", action="store_true", help="small widths and T=2 for CPU runs")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="restore one stereo pair")
    for q in (i,):
        q.add_argument("--checkpoint", required=True)
        q.add_argument("--left", required=True)
        q.add_argument("--right", required=True)
        q.add_argument("--out", required=True)
    i.set_defaults(func=cmd_infer)

    pr = sub.add_parser("profile", help="energy report and firing-rate maps for one pair")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--left", required=True)
    pr.add_argument("--right", required=True)
    pr.add_argument("--sfr", action="store_true", help="also write per-block firing-rate heatmaps")
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_profile)

    e = sub.add_parser("eval", help="PSNR/SSIM over a manifest")
    e.add_argument("--checkpoint", help="omit to score the degraded inputs themselves")
    e.add_argument("--manifest", required=True)
    e.add_argument("--split", help="restrict to one split (train/val/test)")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        with _threads(args.threads):
            return args.func(args)
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    # ManifestError is also a ValueError, so I/O failures are matched first
    except (CheckpointError, DecodeError, ManifestError, OSError) as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
