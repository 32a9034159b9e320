"""Experiment configuration: JSON file -> validated dataclasses.

The file is a JSON object with flat dataset fields at the top level (seed,
dataset_root, classes, the idx_* trio, out_dir) plus optional sections
`split`, `model`, `train`, and `augment`. Every omitted field takes its
default; the model defaults to the full-scale architecture. Unknown keys are
rejected by name, at every level.

There is exactly one seed. Weight-init, split, shuffle, and augmentation
randomness all derive from it via fixed role offsets, so the sections carry
no seed keys and `config_to_dict` -> `parse_config` is an exact round trip.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .augment import AugmentPolicy
from .capsnet import ModelConfig, full_scale_config
from .data import SplitSpec
from .seeds import ROLE_OFFSETS, derive_seed

__all__ = [
    "TrainParams",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "config_to_dict",
    "derived_seeds",
]


@dataclass(frozen=True)
class TrainParams:
    epochs: int = 100
    batch_size: int = 16
    lr: float = 1e-4

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"train.epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"train.batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ValueError(f"train.lr must be > 0, got {self.lr}")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    dataset_root: str | None = None
    classes: tuple[str, ...] = ("A", "H")
    idx_images: str | None = None
    idx_labels: str | None = None
    idx_class_names: tuple[str, ...] | None = None
    out_dir: str | None = None
    split: SplitSpec = SplitSpec()
    model: ModelConfig = full_scale_config()
    train: TrainParams = TrainParams()
    augment: AugmentPolicy = AugmentPolicy(regime="none")

    def __post_init__(self):
        if len(self.classes) < 2:
            raise ValueError("config: classes must list at least two classes")
        if bool(self.idx_images) != bool(self.idx_labels):
            raise ValueError("config: idx_images and idx_labels must be set together")
        if self.idx_images and not self.idx_class_names:
            raise ValueError("config: idx_class_names is required with idx_images/idx_labels")


def _section(doc: dict, name: str, allowed: set[str]) -> dict:
    sect = doc.get(name, {})
    if not isinstance(sect, dict):
        raise ValueError(f"config section {name!r} must be an object")
    unknown = sorted(set(sect) - allowed)
    if unknown:
        raise ValueError(f"config: unknown key {unknown[0]!r} in section {name!r}")
    return sect


def parse_config(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ValueError("config: top level must be a JSON object")
    top_allowed = {"seed", "dataset_root", "classes", "idx_images", "idx_labels",
                   "idx_class_names", "out_dir", "split", "model", "train", "augment"}
    unknown = sorted(set(doc) - top_allowed)
    if unknown:
        raise ValueError(f"config: unknown top-level key {unknown[0]!r}")

    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ValueError(f"config: seed must be an integer, got {seed!r}")

    sp = _section(doc, "split", {"train_count", "val_count", "test_count", "stratified"})
    split = SplitSpec(
        train_count=int(sp.get("train_count", 180)),
        val_count=int(sp.get("val_count", 40)),
        test_count=int(sp.get("test_count", 70)),
        stratified=bool(sp.get("stratified", True)),
    )

    model_fields = {f.name for f in dataclasses.fields(ModelConfig)} - {"seed"}
    mo = _section(doc, "model", model_fields)
    model = dataclasses.replace(full_scale_config(), **{k: int(v) for k, v in mo.items()})

    tr = _section(doc, "train", {"epochs", "batch_size", "lr"})
    train = TrainParams(
        epochs=int(tr.get("epochs", 100)),
        batch_size=int(tr.get("batch_size", 16)),
        lr=float(tr.get("lr", 1e-4)),
    )

    au = _section(doc, "augment", {"regime", "rotation_max_deg", "width_shift_frac",
                                   "height_shift_frac", "shear_frac", "zoom_frac",
                                   "flip_horizontal", "flip_vertical"})
    augment = AugmentPolicy(
        regime=au.get("regime", "none"),
        rotation_max_deg=float(au.get("rotation_max_deg", 40.0)),
        width_shift_frac=float(au.get("width_shift_frac", 0.02)),
        height_shift_frac=float(au.get("height_shift_frac", 0.02)),
        shear_frac=float(au.get("shear_frac", 0.02)),
        zoom_frac=float(au.get("zoom_frac", 0.02)),
        flip_horizontal=bool(au.get("flip_horizontal", True)),
        flip_vertical=bool(au.get("flip_vertical", True)),
    )

    classes = doc.get("classes", ["A", "H"])
    if (not isinstance(classes, (list, tuple))
            or not all(isinstance(c, str) for c in classes)):
        raise ValueError("config: classes must be a list of strings")
    idx_class_names = doc.get("idx_class_names")
    if idx_class_names is not None:
        idx_class_names = tuple(idx_class_names)

    return ExperimentConfig(
        seed=seed,
        dataset_root=doc.get("dataset_root"),
        classes=tuple(classes),
        idx_images=doc.get("idx_images"),
        idx_labels=doc.get("idx_labels"),
        idx_class_names=idx_class_names,
        out_dir=doc.get("out_dir"),
        split=split,
        model=model,
        train=train,
        augment=augment,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file {path} does not exist")
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"config file {path} is not valid JSON: {exc}") from exc
    return parse_config(doc)


def derived_seeds(master: int) -> dict[str, int]:
    """The master seed plus every role's derived sub-seed."""
    out = {"master": int(master)}
    for role in sorted(ROLE_OFFSETS):
        out[role] = derive_seed(master, role)
    return out


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Fully resolved configuration as plain JSON data.

    Feeding the result back through `parse_config` reconstructs an equal
    ExperimentConfig; nested seed fields are omitted because every run
    re-derives them from the top-level seed.
    """
    split = dataclasses.asdict(cfg.split)
    split.pop("seed", None)
    model = dataclasses.asdict(cfg.model)
    model.pop("seed", None)
    return {
        "seed": cfg.seed,
        "dataset_root": cfg.dataset_root,
        "classes": list(cfg.classes),
        "idx_images": cfg.idx_images,
        "idx_labels": cfg.idx_labels,
        "idx_class_names": (list(cfg.idx_class_names)
                            if cfg.idx_class_names is not None else None),
        "out_dir": cfg.out_dir,
        "split": split,
        "model": model,
        "train": dataclasses.asdict(cfg.train),
        "augment": dataclasses.asdict(cfg.augment),
    }
