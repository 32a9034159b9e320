"""Dataset loading, preprocessing, and splitting.

Two on-disk layouts are supported: a directory tree ``<root>/<CLASS>/*.png``
and IDX image/label file pairs (optionally gzipped). Every image becomes an
ImageSample holding a preprocessed [1, S, S] float64 tensor in [0, 1].

Preprocessing: scale to [0, 1], pad to square with the median corner value,
then bilinear-resize to the target side using half-pixel centers. Running it
twice is a no-op (resizing S -> S reproduces the image exactly).
"""

from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .augment import bilinear_sample
from .tensor import Tensor

__all__ = [
    "ImageSample",
    "SplitSpec",
    "Splits",
    "preprocess",
    "load_class_directories",
    "read_idx_images",
    "read_idx_labels",
    "load_idx_dataset",
    "split",
    "batches",
    "write_split_manifest",
    "read_split_manifest",
    "apply_split_manifest",
]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

MIN_SIDE = 8


@dataclass(frozen=True)
class ImageSample:
    pixels: Tensor          # [1, S, S] float64 in [0, 1]
    label: int
    class_name: str
    source_path: str


@dataclass(frozen=True)
class SplitSpec:
    train_count: int = 180
    val_count: int = 40
    test_count: int = 70
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        for name in ("train_count", "val_count", "test_count"):
            if getattr(self, name) < 0:
                raise ValueError(f"SplitSpec.{name} must be >= 0")


@dataclass
class Splits:
    train: list[ImageSample] = field(default_factory=list)
    val: list[ImageSample] = field(default_factory=list)
    test: list[ImageSample] = field(default_factory=list)


def preprocess(pixels: np.ndarray, target_side: int) -> Tensor:
    """Raw 2-D pixel array -> [1, side, side] tensor in [0, 1]."""
    target_side = int(target_side)
    if target_side < MIN_SIDE:
        raise ValueError(f"preprocess: target_side must be >= {MIN_SIDE}, got {target_side}")
    arr = np.asarray(pixels)
    if arr.ndim != 2:
        raise ValueError(f"preprocess: expected a 2-D pixel array, got shape {arr.shape}")
    h, w = arr.shape
    if h < 1 or w < 1:
        raise ValueError(f"preprocess: empty image of shape {arr.shape}")

    if np.issubdtype(arr.dtype, np.integer):
        plane = arr.astype(np.float64) / 255.0
    else:
        plane = np.clip(arr.astype(np.float64), 0.0, 1.0)

    if h != w:
        side = max(h, w)
        corners = [plane[0, 0], plane[0, -1], plane[-1, 0], plane[-1, -1]]
        fill = float(np.median(corners))
        canvas = np.full((side, side), fill, dtype=np.float64)
        top = (side - h) // 2
        left = (side - w) // 2
        canvas[top:top + h, left:left + w] = plane
        plane = canvas
        h = w = side

    factor = h / target_side
    coords = (np.arange(target_side, dtype=np.float64) + 0.5) * factor - 0.5
    resized = bilinear_sample(plane, coords[:, None], coords[None, :])
    np.clip(resized, 0.0, 1.0, out=resized)
    return Tensor._wrap(resized[None, ...])


def load_class_directories(root, class_filter: list[str] | None = None,
                           target_side: int = 28) -> tuple[list[ImageSample], dict[str, int]]:
    """Load ``<root>/<CLASS>/*.png`` -> (samples, class-name -> label map).

    Labels index the sorted class names. Sample order is deterministic:
    classes sorted by name, files sorted by filename within each class.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root {root} is not a directory")
    available = sorted(d.name for d in root.iterdir() if d.is_dir())
    if class_filter is None:
        selected = available
    else:
        missing = [c for c in class_filter if c not in available]
        if missing:
            raise FileNotFoundError(f"dataset root {root} has no class directories "
                                    f"{missing}; found {available}")
        selected = sorted(class_filter)
    if not selected:
        raise ValueError(f"dataset root {root} contains no class directories")

    label_map = {name: i for i, name in enumerate(selected)}
    samples: list[ImageSample] = []
    for name in selected:
        files = sorted((root / name).glob("*.png"))
        if not files:
            raise ValueError(f"class directory {root / name} contains no .png files")
        for path in files:
            with Image.open(path) as img:
                raw = np.asarray(img.convert("L"))
            samples.append(ImageSample(
                pixels=preprocess(raw, target_side),
                label=label_map[name],
                class_name=name,
                source_path=str(path),
            ))
    return samples, label_map


# ---------------------------------------------------------------------------
# IDX files (big-endian: magic, dimension sizes, then raw unsigned bytes)


def _open_maybe_gzip(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx_images(path) -> np.ndarray:
    """Read an IDX image file -> uint8 array [N, H, W]."""
    with _open_maybe_gzip(path) as fh:
        (magic,) = struct.unpack(">I", fh.read(4))
        if magic != IDX_IMAGES_MAGIC:
            raise ValueError(f"{path}: expected image magic {IDX_IMAGES_MAGIC:#010x}, "
                             f"got {magic:#010x}")
        n, h, w = struct.unpack(">III", fh.read(12))
        raw = fh.read(n * h * w)
    if len(raw) != n * h * w:
        raise ValueError(f"{path}: truncated image data ({len(raw)} of {n * h * w} bytes)")
    return np.frombuffer(raw, dtype=np.uint8).reshape(n, h, w)


def read_idx_labels(path) -> np.ndarray:
    """Read an IDX label file -> uint8 array [N]."""
    with _open_maybe_gzip(path) as fh:
        (magic,) = struct.unpack(">I", fh.read(4))
        if magic != IDX_LABELS_MAGIC:
            raise ValueError(f"{path}: expected label magic {IDX_LABELS_MAGIC:#010x}, "
                             f"got {magic:#010x}")
        (n,) = struct.unpack(">I", fh.read(4))
        raw = fh.read(n)
    if len(raw) != n:
        raise ValueError(f"{path}: truncated label data ({len(raw)} of {n} bytes)")
    return np.frombuffer(raw, dtype=np.uint8)


def load_idx_dataset(images_path, labels_path, class_names: list[str],
                     class_filter: list[str] | None = None,
                     target_side: int = 28) -> tuple[list[ImageSample], dict[str, int]]:
    """Pair IDX images with labels. `class_names[v]` names raw label value v.

    `class_filter` keeps only those classes; labels are re-assigned by sorted
    class name, matching the directory loader's convention. Returns
    (samples, class-name -> label map).
    """
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise ValueError(f"IDX pair mismatch: {images.shape[0]} images vs "
                         f"{labels.shape[0]} labels")
    if labels.size and int(labels.max()) >= len(class_names):
        raise ValueError(f"label value {int(labels.max())} out of range for "
                         f"{len(class_names)} class names")
    keep = sorted(class_filter) if class_filter is not None else sorted(set(class_names))
    unknown = [c for c in keep if c not in class_names]
    if unknown:
        raise ValueError(f"selected classes {unknown} not present in class names")
    label_map = {name: i for i, name in enumerate(keep)}

    samples: list[ImageSample] = []
    for i in range(images.shape[0]):
        name = class_names[int(labels[i])]
        if name not in label_map:
            continue
        samples.append(ImageSample(
            pixels=preprocess(images[i], target_side),
            label=label_map[name],
            class_name=name,
            source_path=f"{images_path}#{i}",
        ))
    return samples, label_map


# ---------------------------------------------------------------------------
# splitting and batching


def split(samples: list[ImageSample], spec: SplitSpec) -> Splits:
    """Disjoint train/val/test selection, stratified per class by default.

    Stratified mode shuffles within each class (classes visited in label
    order) and deals each split as evenly as the counts allow, giving the
    remainder to the lexicographically first classes. Raises when a class
    cannot supply its share.
    """
    rng = np.random.default_rng(spec.seed)
    want = spec.train_count + spec.val_count + spec.test_count
    if want > len(samples):
        raise ValueError(f"split: requested {want} samples but only {len(samples)} available")

    if not spec.stratified:
        order = rng.permutation(len(samples))
        picked = [samples[i] for i in order]
        return Splits(
            train=picked[:spec.train_count],
            val=picked[spec.train_count:spec.train_count + spec.val_count],
            test=picked[spec.train_count + spec.val_count:want],
        )

    labels = sorted({s.label for s in samples})
    pools: dict[int, list[ImageSample]] = {}
    for lab in labels:
        group = [s for s in samples if s.label == lab]
        order = rng.permutation(len(group))
        pools[lab] = [group[i] for i in order]

    cursors = {lab: 0 for lab in labels}
    out = Splits()
    for split_name, total in (("train", spec.train_count), ("val", spec.val_count),
                              ("test", spec.test_count)):
        base, rem = divmod(total, len(labels))
        chosen: list[ImageSample] = []
        for pos, lab in enumerate(labels):
            take = base + (1 if pos < rem else 0)
            pool, at = pools[lab], cursors[lab]
            if at + take > len(pool):
                raise ValueError(
                    f"split: class {pool[0].class_name!r} has only {len(pool)} samples; "
                    f"{split_name} needs {take} more after {at} were already used")
            chosen.extend(pool[at:at + take])
            cursors[lab] = at + take
        getattr(out, split_name).extend(chosen)
    return out


def batches(samples: list[ImageSample], batch_size: int, shuffle: bool = False,
            rng: np.random.Generator | None = None):
    """Yield one epoch of batches covering every sample exactly once.

    With shuffle off, batches follow the list order; with it on, the order
    comes from the supplied generator (required), so epochs are replayable.
    """
    batch_size = int(batch_size)
    if batch_size < 1:
        raise ValueError(f"batches: batch_size must be >= 1, got {batch_size}")
    if shuffle:
        if rng is None:
            raise ValueError("batches: shuffle=True requires an rng")
        order = rng.permutation(len(samples))
    else:
        order = np.arange(len(samples))
    for start in range(0, len(samples), batch_size):
        yield [samples[i] for i in order[start:start + batch_size]]


# ---------------------------------------------------------------------------
# split manifests (JSON records of exact split membership, for audits/reruns)


def write_split_manifest(splits: Splits, path) -> None:
    doc = {
        name: [{"source_path": s.source_path, "label": s.label, "class_name": s.class_name}
               for s in getattr(splits, name)]
        for name in ("train", "val", "test")
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_split_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    for name in ("train", "val", "test"):
        if name not in doc:
            raise ValueError(f"split manifest {path} is missing the {name!r} list")
    return doc


def apply_split_manifest(samples: list[ImageSample], manifest: dict) -> Splits:
    """Rebuild splits by source_path lookup. Every listed path must be present."""
    by_path = {s.source_path: s for s in samples}
    out = Splits()
    for name in ("train", "val", "test"):
        for entry in manifest[name]:
            sample = by_path.get(entry["source_path"])
            if sample is None:
                raise ValueError(f"split manifest entry {entry['source_path']!r} not found "
                                 "in the loaded dataset")
            getattr(out, name).append(sample)
    return out
