"""Dataset loading, preprocessing, splitting, batching, and IDX parsing."""

import gzip
import struct

import numpy as np
import pytest
from PIL import Image

from glyphcaps.data import (
    ImageSample,
    SplitSpec,
    apply_split_manifest,
    batches,
    load_class_directories,
    load_idx_dataset,
    preprocess,
    read_idx_images,
    read_idx_labels,
    read_split_manifest,
    split,
    write_split_manifest,
)
from glyphcaps.tensor import Tensor


def _sample(i: int, label: int, name: str) -> ImageSample:
    rng = np.random.default_rng(1000 + i)
    return ImageSample(pixels=Tensor(rng.random((1, 8, 8))), label=label,
                       class_name=name, source_path=f"mem://{name}/{i}")


def _two_class_samples(per_class: int) -> list[ImageSample]:
    out = []
    for i in range(per_class):
        out.append(_sample(2 * i, 0, "A"))
        out.append(_sample(2 * i + 1, 1, "H"))
    return out


# ---------------------------------------------------------------------------
# preprocessing


def test_preprocess_same_side_is_identity():
    rng = np.random.default_rng(0)
    plane = rng.random((10, 10))
    out = preprocess(plane, 10)
    assert out.shape == (1, 10, 10)
    assert np.allclose(out.data[0], plane, atol=1e-15)


def test_preprocess_scales_integer_images_by_255():
    arr = np.array([[0, 51], [102, 255]], dtype=np.uint8)
    out = preprocess(arr, 8).data[0]
    assert out.min() == 0.0
    assert out.max() == 1.0


def test_preprocess_constant_image_stays_constant():
    out = preprocess(np.full((16, 16), 0.25), 8).data[0]
    assert np.allclose(out, 0.25, atol=1e-15)


def test_preprocess_checkerboard_downscale_averages_blocks():
    # 16x16 checkerboard -> 8x8 with half-pixel centers: every sample lands
    # exactly between two rows and two columns, averaging each 2x2 block
    board = np.indices((16, 16)).sum(axis=0) % 2
    out = preprocess(board.astype(np.float64), 8).data[0]
    assert np.allclose(out, 0.5, atol=1e-15)


def test_preprocess_is_idempotent():
    rng = np.random.default_rng(1)
    first = preprocess(rng.random((14, 14)), 10)
    second = preprocess(first.data[0], 10)
    assert np.allclose(first.data, second.data, atol=1e-12)


def test_preprocess_pads_non_square_with_corner_median():
    plane = np.zeros((4, 8))
    plane[0, 0], plane[0, -1], plane[-1, 0], plane[-1, -1] = 0.1, 0.3, 0.5, 0.9
    out = preprocess(plane, 8).data[0]
    # median of the four corners is (0.3 + 0.5) / 2 = 0.4
    assert np.allclose(out[0, :], 0.4, atol=1e-15)
    assert np.allclose(out[7, :], 0.4, atol=1e-15)
    assert np.allclose(out[2:6, :], plane, atol=1e-15)


def test_preprocess_rejects_tiny_targets_and_bad_shapes():
    with pytest.raises(ValueError, match=">= 8"):
        preprocess(np.zeros((10, 10)), 7)
    with pytest.raises(ValueError, match="2-D"):
        preprocess(np.zeros(10), 8)


# ---------------------------------------------------------------------------
# directory loading


def _write_png_tree(root, spec):
    for name, count in spec.items():
        d = root / name
        d.mkdir(parents=True)
        for i in range(count):
            arr = np.full((9, 9), 40 * (i + 1), dtype=np.uint8)
            Image.fromarray(arr, mode="L").save(d / f"{name}_{i:02d}.png")


def test_load_class_directories_labels_and_order(tmp_path):
    _write_png_tree(tmp_path, {"H": 2, "A": 3})
    samples, label_map = load_class_directories(tmp_path, target_side=8)
    assert label_map == {"A": 0, "H": 1}
    assert [s.class_name for s in samples] == ["A", "A", "A", "H", "H"]
    assert [s.label for s in samples] == [0, 0, 0, 1, 1]
    assert samples[0].source_path.endswith("A_00.png")
    assert samples[0].pixels.shape == (1, 8, 8)


def test_load_class_directories_filter(tmp_path):
    _write_png_tree(tmp_path, {"A": 1, "H": 1, "T": 1})
    samples, label_map = load_class_directories(tmp_path, ["T", "A"], target_side=8)
    assert label_map == {"A": 0, "T": 1}
    assert sorted({s.class_name for s in samples}) == ["A", "T"]


def test_load_class_directories_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_class_directories(tmp_path / "missing")
    _write_png_tree(tmp_path, {"A": 1})
    with pytest.raises(FileNotFoundError, match="B"):
        load_class_directories(tmp_path, ["A", "B"])
    (tmp_path / "EMPTY").mkdir()
    with pytest.raises(ValueError, match="no .png files"):
        load_class_directories(tmp_path, ["EMPTY"])


# ---------------------------------------------------------------------------
# IDX files


def _idx_image_bytes(images: np.ndarray) -> bytes:
    n, h, w = images.shape
    return struct.pack(">IIII", 0x00000803, n, h, w) + images.astype(np.uint8).tobytes()


def _idx_label_bytes(labels) -> bytes:
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", 0x00000801, labels.size) + labels.tobytes()


def test_idx_roundtrip_and_gzip(tmp_path):
    rng = np.random.default_rng(2)
    images = rng.integers(0, 256, size=(4, 9, 9), dtype=np.uint8)
    labels = np.array([0, 1, 1, 0], dtype=np.uint8)

    plain = tmp_path / "img.idx"
    plain.write_bytes(_idx_image_bytes(images))
    assert np.array_equal(read_idx_images(plain), images)

    zipped = tmp_path / "img.idx.gz"
    zipped.write_bytes(gzip.compress(_idx_image_bytes(images)))
    assert np.array_equal(read_idx_images(zipped), images)

    lab = tmp_path / "lab.idx"
    lab.write_bytes(_idx_label_bytes(labels))
    assert np.array_equal(read_idx_labels(lab), labels)


def test_idx_magic_and_truncation_errors(tmp_path):
    bad = tmp_path / "bad.idx"
    bad.write_bytes(struct.pack(">IIII", 0x00000805, 1, 2, 2) + b"\x00" * 4)
    with pytest.raises(ValueError, match="magic"):
        read_idx_images(bad)
    short = tmp_path / "short.idx"
    short.write_bytes(struct.pack(">IIII", 0x00000803, 2, 3, 3) + b"\x00" * 5)
    with pytest.raises(ValueError, match="truncated"):
        read_idx_images(short)


def test_load_idx_dataset_filters_and_relabels(tmp_path):
    images = np.zeros((5, 9, 9), dtype=np.uint8)
    labels = np.array([0, 1, 2, 1, 0], dtype=np.uint8)
    img_path = tmp_path / "img.idx"
    lab_path = tmp_path / "lab.idx"
    img_path.write_bytes(_idx_image_bytes(images))
    lab_path.write_bytes(_idx_label_bytes(labels))

    samples, label_map = load_idx_dataset(img_path, lab_path, ["T", "A", "H"],
                                          class_filter=["A", "H"], target_side=8)
    assert label_map == {"A": 0, "H": 1}
    assert [s.class_name for s in samples] == ["A", "H", "A"]
    assert samples[0].source_path == f"{img_path}#1"

    short = tmp_path / "lab2.idx"
    short.write_bytes(_idx_label_bytes(np.array([0, 1], dtype=np.uint8)))
    with pytest.raises(ValueError, match="mismatch"):
        load_idx_dataset(img_path, short, ["T", "A", "H"])


# ---------------------------------------------------------------------------
# splitting


def test_split_counts_and_class_balance():
    samples = _two_class_samples(12)
    out = split(samples, SplitSpec(train_count=8, val_count=4, test_count=6, seed=1))
    assert (len(out.train), len(out.val), len(out.test)) == (8, 4, 6)
    for part in (out.train, out.val, out.test):
        labels = [s.label for s in part]
        assert labels.count(0) == labels.count(1)


def test_split_parts_are_disjoint_and_deterministic():
    samples = _two_class_samples(12)
    spec = SplitSpec(train_count=8, val_count=4, test_count=6, seed=2)
    a = split(samples, spec)
    b = split(samples, spec)
    paths = [s.source_path for s in a.train + a.val + a.test]
    assert len(paths) == len(set(paths))
    assert [s.source_path for s in a.train] == [s.source_path for s in b.train]
    c = split(samples, SplitSpec(train_count=8, val_count=4, test_count=6, seed=3))
    assert [s.source_path for s in a.train] != [s.source_path for s in c.train]


def test_split_allows_empty_parts():
    samples = _two_class_samples(5)
    out = split(samples, SplitSpec(train_count=0, val_count=0, test_count=10, seed=0))
    assert (len(out.train), len(out.val), len(out.test)) == (0, 0, 10)


def test_split_odd_remainder_goes_to_first_classes():
    samples = _two_class_samples(5)
    out = split(samples, SplitSpec(train_count=5, val_count=0, test_count=0, seed=0))
    labels = [s.label for s in out.train]
    assert labels.count(0) == 3
    assert labels.count(1) == 2


def test_split_shortfall_names_the_class():
    samples = [_sample(i, 0, "A") for i in range(10)] + [_sample(100, 1, "H")]
    with pytest.raises(ValueError, match="'H'"):
        split(samples, SplitSpec(train_count=6, val_count=2, test_count=2, seed=0))


def test_split_rejects_overdraw():
    with pytest.raises(ValueError, match="requested"):
        split(_two_class_samples(3), SplitSpec(train_count=10, val_count=0, test_count=0))


def test_split_non_stratified_mode():
    samples = _two_class_samples(10)
    spec = SplitSpec(train_count=9, val_count=5, test_count=6, seed=4, stratified=False)
    out = split(samples, spec)
    assert (len(out.train), len(out.val), len(out.test)) == (9, 5, 6)


# ---------------------------------------------------------------------------
# batching


def test_batches_partition_in_order_without_shuffle():
    samples = _two_class_samples(3)   # 6 samples
    got = list(batches(samples, 4))
    assert [len(b) for b in got] == [4, 2]
    flat = [s.source_path for b in got for s in b]
    assert flat == [s.source_path for s in samples]


def test_batches_shuffle_covers_everything_once():
    samples = _two_class_samples(5)
    got = list(batches(samples, 3, shuffle=True, rng=np.random.default_rng(5)))
    flat = [s.source_path for b in got for s in b]
    assert sorted(flat) == sorted(s.source_path for s in samples)
    assert flat != [s.source_path for s in samples]


def test_batches_shuffle_requires_rng():
    with pytest.raises(ValueError, match="rng"):
        list(batches(_two_class_samples(2), 2, shuffle=True))


def test_batches_rejects_non_positive_size():
    with pytest.raises(ValueError):
        list(batches(_two_class_samples(2), 0))


# ---------------------------------------------------------------------------
# split manifests


def test_split_manifest_roundtrip(tmp_path):
    samples = _two_class_samples(6)
    out = split(samples, SplitSpec(train_count=6, val_count=2, test_count=4, seed=6))
    path = tmp_path / "split.json"
    write_split_manifest(out, path)
    rebuilt = apply_split_manifest(samples, read_split_manifest(path))
    for part in ("train", "val", "test"):
        assert ([s.source_path for s in getattr(rebuilt, part)]
                == [s.source_path for s in getattr(out, part)])


def test_apply_split_manifest_rejects_unknown_paths():
    samples = _two_class_samples(2)
    manifest = {"train": [{"source_path": "mem://A/99", "label": 0, "class_name": "A"}],
                "val": [], "test": []}
    with pytest.raises(ValueError, match="mem://A/99"):
        apply_split_manifest(samples, manifest)


def test_read_split_manifest_requires_all_parts(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"train": [], "val": []}')
    with pytest.raises(ValueError, match="test"):
        read_split_manifest(path)
