"""Command-line interface.

Subcommands:

* ``train``            - load data, split, build, train, checkpoint, evaluate,
                         and write every artifact plus a run manifest.
* ``eval``             - re-evaluate a checkpoint on a dataset split.
* ``preview-augment``  - write original/augmented image pairs for inspection.
* ``gradcheck``        - sweep every parameter element with central
                         differences and compare against the tape's gradients.

Runs are reproducible: rerunning ``train`` with the same config and seed
produces identical splits, weights, history, and checkpoint bytes. The run
manifest embeds the fully resolved config; feeding that object back in as a
config file reproduces the run.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .augment import augment_batch
from .capsnet import (CapsNetModel, bce_loss, build_model, forward, load_model,
                      param_count, save_model, small_test_config)
from .config import ExperimentConfig, config_to_dict, derived_seeds, load_config
from .data import (apply_split_manifest, load_class_directories, load_idx_dataset,
                   read_split_manifest, split, write_split_manifest)
from .export import export, write_confusion_csv, write_curve_svgs, write_metrics_json, \
    write_roc_csvs
from .glyphs import save_png
from .metrics import evaluate
from .seeds import derive_seed
from .tensor import Tensor, finite_diff_check
from .training import train

__all__ = ["main", "GRADCHECK_TOLERANCE"]

GRADCHECK_TOLERANCE = 1e-4
CHECKPOINT_NAME = "model.ckpt"


def _load_samples(cfg: ExperimentConfig):
    """Load the configured dataset -> (samples, class_names ordered by label)."""
    side = cfg.model.input_side
    if cfg.idx_images:
        samples, label_map = load_idx_dataset(
            cfg.idx_images, cfg.idx_labels, list(cfg.idx_class_names),
            list(cfg.classes), target_side=side)
    else:
        if not cfg.dataset_root:
            raise ValueError("config: dataset_root is required unless idx_images and "
                             "idx_labels are given")
        samples, label_map = load_class_directories(
            cfg.dataset_root, list(cfg.classes), target_side=side)
    class_names = sorted(label_map, key=label_map.get)
    if len(class_names) != cfg.model.num_classes:
        raise ValueError(f"config: model.num_classes is {cfg.model.num_classes} but the "
                         f"dataset has {len(class_names)} classes ({class_names})")
    return samples, class_names


def _resolve_out_dir(args, cfg: ExperimentConfig) -> Path:
    out = args.out or cfg.out_dir
    if not out:
        raise ValueError("no output directory: pass --out or set out_dir in the config")
    return Path(out)


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    out_dir = _resolve_out_dir(args, cfg)
    cfg = dataclasses.replace(cfg, out_dir=str(out_dir))
    out_dir.mkdir(parents=True, exist_ok=True)

    samples, class_names = _load_samples(cfg)
    split_spec = dataclasses.replace(cfg.split, seed=derive_seed(cfg.seed, "split"))
    splits = split(samples, split_spec)
    model_cfg = dataclasses.replace(cfg.model, seed=derive_seed(cfg.seed, "init"))
    model = build_model(model_cfg)
    n_params = param_count(model)
    print(f"dataset: {len(samples)} samples, classes {class_names}")
    print(f"split: train={len(splits.train)} val={len(splits.val)} test={len(splits.test)}")
    print(f"model: {n_params} trainable parameters, augment regime {cfg.augment.regime!r}")

    records = train(model, splits, cfg.augment, epochs=cfg.train.epochs,
                    batch_size=cfg.train.batch_size, seed=cfg.seed, lr=cfg.train.lr)
    for r in records:
        print(f"epoch {r.epoch:3d}  train_loss {r.train_loss:.6f}  "
              f"train_acc {r.train_accuracy:.4f}  val_loss {r.val_loss:.6f}  "
              f"val_acc {r.val_accuracy:.4f}  ({r.wall_seconds:.2f}s)")

    report = evaluate(model, splits.test) if splits.test else None
    artifacts = export(records, report, out_dir)

    save_model(model, out_dir / CHECKPOINT_NAME)
    artifacts.append(CHECKPOINT_NAME)
    write_split_manifest(splits, out_dir / "split_manifest.json")
    artifacts.append("split_manifest.json")

    manifest = {
        "version": __version__,
        "config": config_to_dict(cfg),
        "seeds": derived_seeds(cfg.seed),
        "param_count": n_params,
        "class_names": class_names,
        "split_sizes": {"train": len(splits.train), "val": len(splits.val),
                        "test": len(splits.test)},
        "artifacts": sorted(artifacts),
    }
    with open(out_dir / "run_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")

    if report is not None:
        print(f"test: accuracy {report.accuracy:.4f}  loss {report.loss:.6f}")
        for name, value in zip(report.class_names, report.auc):
            print(f"test: AUC[{name}] {value:.4f}")
    print(f"wrote {len(artifacts) + 1} files to {out_dir}")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.checkpoint)
    cfg = load_config(args.config)
    if cfg.model.input_side != model.config.input_side:
        raise ValueError(f"checkpoint expects input side {model.config.input_side} but the "
                         f"config preprocesses to {cfg.model.input_side}")
    cfg = dataclasses.replace(cfg, model=model.config)
    samples, _ = _load_samples(cfg)
    if args.manifest:
        splits = apply_split_manifest(samples, read_split_manifest(args.manifest))
    else:
        split_spec = dataclasses.replace(cfg.split, seed=derive_seed(cfg.seed, "split"))
        splits = split(samples, split_spec)
    subset = getattr(splits, args.split)
    if not subset:
        raise ValueError(f"eval: the {args.split!r} split is empty")

    report = evaluate(model, subset)
    print(f"{args.split}: {len(subset)} samples")
    print(f"accuracy {report.accuracy:.4f}  loss {report.loss:.6f}")
    for name, value in zip(report.class_names, report.auc):
        print(f"AUC[{name}] {value:.4f}")

    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_metrics_json(report, out_dir / "metrics.json")
        write_roc_csvs(report, out_dir)
        write_confusion_csv(report, out_dir / "confusion.csv")
        write_curve_svgs([], report, out_dir)
        print(f"wrote metrics to {out_dir}")
    return 0


def cmd_preview_augment(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    out_dir = _resolve_out_dir(args, cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples, _ = _load_samples(cfg)
    count = min(args.count, len(samples))
    rng = np.random.default_rng(derive_seed(cfg.seed, "augment"))
    picked = samples[:count]
    augmented = augment_batch([s.pixels for s in picked], cfg.augment, rng)
    for i, (sample, image) in enumerate(zip(picked, augmented)):
        save_png(sample.pixels.data[0], out_dir / f"preview_{i:02d}_original.png")
        save_png(image.data[0], out_dir / f"preview_{i:02d}_augmented.png")
    print(f"regime {cfg.augment.regime!r}: wrote {2 * count} images to {out_dir}")
    return 0


def cmd_gradcheck(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        model_cfg = cfg.model
        seed = cfg.seed if args.seed is None else args.seed
    else:
        model_cfg = small_test_config()
        seed = 0 if args.seed is None else args.seed
    model_cfg = dataclasses.replace(model_cfg, seed=derive_seed(seed, "init"))
    model = build_model(model_cfg)
    names = list(model.parameters())
    params = list(model.parameters().values())

    rng = np.random.default_rng(seed)
    image = Tensor(rng.random((1, model_cfg.input_side, model_cfg.input_side)))
    target_row = np.zeros(model_cfg.num_classes)
    target_row[0] = 1.0
    target = Tensor(target_row)

    def f(ps):
        m = CapsNetModel(model_cfg, **dict(zip(names, ps)))
        return bce_loss(forward(m, image), target)

    total = sum(p.size for p in params)
    print(f"gradcheck: {total} parameter elements, central differences eps=1e-5")
    started = time.perf_counter()
    errors = finite_diff_check(f, params, eps=1e-5, per_param=True)
    elapsed = time.perf_counter() - started
    worst = max(errors)
    worst_name = names[errors.index(worst)]
    for name, err in zip(names, errors):
        print(f"  {name:16s} relative error {err:.3e}")
    if worst < GRADCHECK_TOLERANCE:
        print(f"gradcheck: max relative error {worst:.3e} "
              f"(tolerance {GRADCHECK_TOLERANCE:.0e}) [OK] in {elapsed:.1f}s")
        return 0
    print(f"gradcheck: parameter {worst_name!r} exceeds tolerance "
          f"{GRADCHECK_TOLERANCE:.0e} with relative error {worst:.3e} "
          f"[FAIL] in {elapsed:.1f}s")
    return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glyphcaps",
        description="Capsule-network training and evaluation on tiny glyph datasets.")
    parser.add_argument("--version", action="version", version=f"glyphcaps {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write run artifacts")
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--out", default=None,
                   help="output directory (default: out_dir from the config)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True, help="checkpoint file from train")
    p.add_argument("--config", required=True, help="JSON experiment config (dataset/split)")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--manifest", default=None,
                   help="split manifest pinning exact membership")
    p.add_argument("--out", default=None, help="directory for metrics artifacts")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("preview-augment", help="write original/augmented image pairs")
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--out", default=None,
                   help="output directory (default: out_dir from the config)")
    p.add_argument("--count", type=int, default=8, help="number of samples to preview")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_preview_augment)

    p = sub.add_parser("gradcheck", help="verify gradients with central differences")
    p.add_argument("--config", default=None,
                   help="JSON config whose model section to check (default: small config)")
    p.add_argument("--seed", type=int, default=None, help="seed for weights and probe image")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
