"""Acceptance gate: nine end-to-end checks, one pass/fail line each.

Each test prints exactly one line of the form

    criterion N (<label>): PASS|FAIL (<detail>)

through the capture-disabled stream, so the lines show up live under a plain
`pytest -v` run. The slowest item is criterion 1 (the full finite-difference
sweep of the small model, about a minute); everything else is seconds.

Criterion 8 targets a real letter-glyph corpus when one is available: a
directory tree of per-class PNGs at $GLYPHCAPS_CGCL_ROOT (or data/cgcl under
the repo root), else an IDX pair named by $GLYPHCAPS_IDX_IMAGES and
$GLYPHCAPS_IDX_LABELS. Without either it falls back to the bundled synthetic
stroke-glyph renderer with the same split protocol and a stricter AUC bar,
and the printed line names whichever source ran.
"""

import dataclasses
import json
import math
import os
import pathlib
import re
import time

import numpy as np

from glyphcaps.augment import (IDENTITY_PARAMS, apply_affine, augment_batch,
                               policy_for, sample_params)
from glyphcaps.capsnet import (build_model, param_count, param_count_formula,
                               full_scale_config, routing, small_test_config,
                               squash)
from glyphcaps.cli import main
from glyphcaps.data import SplitSpec, load_class_directories, load_idx_dataset, split
from glyphcaps.glyphs import make_glyph_dataset
from glyphcaps.metrics import auc, evaluate, roc_curve
from glyphcaps.seeds import derive_seed
from glyphcaps.tensor import Tensor
from glyphcaps.training import train


def _report(capsys, num, label, ok, detail):
    with capsys.disabled():
        print(f"criterion {num} ({label}): {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {num} ({label}): {detail}"


def test_criterion_1_gradient_check(capsys):
    started = time.perf_counter()
    rc = main(["gradcheck"])
    elapsed = time.perf_counter() - started
    out = capsys.readouterr().out
    found = re.search(r"max relative error ([0-9.eE+-]+)", out)
    worst = float(found.group(1)) if found else float("nan")
    ok = rc == 0 and worst < 1e-4 and elapsed < 120.0
    _report(capsys, 1, "gradients vs central differences", ok,
            f"max rel err {worst:.3e} < 1e-4, {elapsed:.1f}s < 120s")


def test_criterion_2_routing_invariants(capsys):
    rng = np.random.default_rng(202)
    worst_sum = 0.0
    for _ in range(1000):
        n_p = int(rng.integers(1, 16))
        k = int(rng.integers(2, 6))
        d_v = int(rng.integers(1, 9))
        u_hat = Tensor(rng.normal(0.0, 1.0, size=(n_p, k, d_v)))
        for t in range(1, int(rng.integers(1, 5)) + 1):
            _, c = routing(u_hat, iterations=t)
            worst_sum = max(worst_sum, float(np.abs(c.data.sum(axis=1) - 1.0).max()))

    # Hand scalar recursion, pure Python floats: N_p = 2, K = 2, d_v = 2.
    u = [[[1.0, 0.0], [0.3, -0.2]], [[0.8, 0.6], [-0.5, 0.4]]]
    b = [[0.0, 0.0], [0.0, 0.0]]
    for it in range(3):
        c_hand = []
        for i in range(2):
            e0, e1 = math.exp(b[i][0]), math.exp(b[i][1])
            c_hand.append([e0 / (e0 + e1), e1 / (e0 + e1)])
        v_hand = []
        for j in range(2):
            sx = c_hand[0][j] * u[0][j][0] + c_hand[1][j] * u[1][j][0]
            sy = c_hand[0][j] * u[0][j][1] + c_hand[1][j] * u[1][j][1]
            n = math.sqrt(sx * sx + sy * sy)
            v_hand.append([sx * n / (1 + n * n), sy * n / (1 + n * n)])
        if it < 2:
            for i in range(2):
                for j in range(2):
                    b[i][j] += (u[i][j][0] * v_hand[j][0]
                                + u[i][j][1] * v_hand[j][1])
    v, c = routing(Tensor(np.array(u)), iterations=3)
    oracle_dev = max(float(np.abs(v.data - np.array(v_hand)).max()),
                     float(np.abs(c.data - np.array(c_hand)).max()))

    ok = worst_sum <= 1e-12 and oracle_dev <= 1e-12
    _report(capsys, 2, "routing invariants", ok,
            f"coupling sum dev {worst_sum:.2e}, scalar oracle dev {oracle_dev:.2e}")


def test_criterion_3_squash_invariants(capsys):
    rng = np.random.default_rng(303)
    total = 0
    worst_norm = 0.0
    worst_cos = 1.0
    for dim in (1, 2, 3, 4, 6, 8, 12, 16):
        raw = rng.normal(0.0, 3.0, size=(12500, dim))
        raw[::2] *= 1e-3   # half the rows are near-zero vectors
        out = squash(Tensor(raw)).data
        norms = np.linalg.norm(out, axis=1)
        worst_norm = max(worst_norm, float(norms.max()))
        cos = ((raw * out).sum(axis=1)
               / (np.linalg.norm(raw, axis=1) * norms))
        worst_cos = min(worst_cos, float(cos.min()))
        total += raw.shape[0]
    zero_out = squash(Tensor(np.zeros((1, 5)))).data
    zero_ok = bool(np.all(zero_out == 0.0))
    ok = (total == 10 ** 5 and worst_norm < 1.0
          and worst_cos >= 1.0 - 1e-12 and zero_ok)
    _report(capsys, 3, "squash invariants", ok,
            f"{total} vectors, max norm {worst_norm:.6f}, "
            f"min cosine 1-{1.0 - worst_cos:.1e}, zero->zero {zero_ok}")


def test_criterion_4_auc_matches_concordance(capsys):
    rng = np.random.default_rng(404)
    worst = 0.0
    for case in range(500):
        n = int(rng.integers(2, 201))
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        scores = rng.random(n)
        if case % 2:
            scores = np.round(scores, 1)   # force score ties
        trapezoid = auc(roc_curve(scores, labels))
        pos = scores[labels == 1][:, None]
        neg = scores[labels == 0][None, :]
        concordance = float(np.mean((pos > neg) + 0.5 * (pos == neg)))
        worst = max(worst, abs(trapezoid - concordance))
    ok = worst <= 1e-12
    _report(capsys, 4, "trapezoid AUC equals pair concordance", ok,
            f"500 instances, worst gap {worst:.2e}")


def test_criterion_5_augmentation_contracts(capsys):
    rng = np.random.default_rng(505)

    images = [Tensor(rng.random((1, 9, 11))) for _ in range(200)]
    flipped = augment_batch(images, policy_for("lossless"), rng)
    multisets_ok = all(
        np.array_equal(np.sort(a.data.ravel()), np.sort(b.data.ravel()))
        for a, b in zip(images, flipped))

    image = Tensor(rng.random((1, 28, 28)))
    identity_dev = float(
        np.abs(apply_affine(image, IDENTITY_PARAMS).data - image.data).max())

    policy = policy_for("lossy")
    in_bounds = True
    for _ in range(10 ** 4):
        p = sample_params(policy, rng, (28, 28))
        in_bounds = in_bounds and (
            abs(p.angle_deg) <= 40.0
            and abs(p.dx) <= 0.02 * 28 and abs(p.dy) <= 0.02 * 28
            and abs(p.shear) <= 0.02
            and 0.98 <= p.zoom <= 1.02
            and not p.flip_h and not p.flip_v)

    ok = multisets_ok and identity_dev <= 1e-12 and in_bounds
    _report(capsys, 5, "augmentation contracts", ok,
            f"multisets exact {multisets_ok}, identity dev {identity_dev:.2e}, "
            f"10000 lossy draws in bounds {in_bounds}")


def test_criterion_6_parameter_count(capsys):
    config = full_scale_config()
    formula = param_count_formula(config)
    counted = param_count(build_model(config))
    ok = counted == formula and counted > 8 * 10 ** 7
    _report(capsys, 6, "full-scale parameter count", ok,
            f"counted {counted:,} == closed form {formula:,}, > 80,000,000")


def test_criterion_7_overfit_sanity(capsys, tmp_path):
    make_glyph_dataset(tmp_path / "glyphs", classes=("A", "H"),
                       per_class=10, side=28, seed=7)
    samples, _ = load_class_directories(tmp_path / "glyphs")
    splits = split(samples, SplitSpec(train_count=20, val_count=0,
                                      test_count=0, seed=7))
    config = dataclasses.replace(small_test_config(), seed=derive_seed(7, "init"))
    model = build_model(config)

    started = time.perf_counter()
    reached_at = None
    epochs_run = 0
    while epochs_run < 200 and reached_at is None:
        chunk = train(model, splits, policy_for("none"), epochs=20,
                      batch_size=5, seed=7, lr=1e-3)
        for record in chunk:
            epochs_run += 1
            if record.train_accuracy > 0.95:
                reached_at = epochs_run
                break
    elapsed = time.perf_counter() - started

    ok = reached_at is not None and elapsed < 600.0
    _report(capsys, 7, "20-sample overfit", ok,
            f">95% train accuracy at epoch {reached_at} <= 200, {elapsed:.1f}s < 600s")


def _letter_corpus(tmp_path):
    """Pick the best available two-class letter source, best first.

    Returns (source label, samples, [(regime, min AUC target), ...]).
    """
    repo_root = pathlib.Path(__file__).resolve().parent.parent
    cgcl = pathlib.Path(os.environ.get("GLYPHCAPS_CGCL_ROOT",
                                       repo_root / "data" / "cgcl"))
    if (cgcl / "A").is_dir() and (cgcl / "H").is_dir():
        samples, _ = load_class_directories(cgcl, class_filter=("A", "H"),
                                            target_side=28)
        return "carved-glyph directory", samples, [("none", 0.85),
                                                   ("lossless", 0.88)]

    idx_images = os.environ.get("GLYPHCAPS_IDX_IMAGES")
    idx_labels = os.environ.get("GLYPHCAPS_IDX_LABELS")
    if idx_images and idx_labels and os.path.exists(idx_images) \
            and os.path.exists(idx_labels):
        names = os.environ.get("GLYPHCAPS_IDX_CLASSES",
                               ",".join("ABCDEFGHIJKLMNOPQRSTUVWXYZ")).split(",")
        samples, _ = load_idx_dataset(idx_images, idx_labels, names,
                                      class_filter=tuple(names[:2]),
                                      target_side=28)
        return "letter IDX files", samples, [("none", 0.95)]

    make_glyph_dataset(tmp_path / "fallback", classes=("A", "H"),
                       per_class=145, side=28, seed=8)
    samples, _ = load_class_directories(tmp_path / "fallback")
    return "synthetic stroke glyphs", samples, [("none", 0.95)]


def test_criterion_8_two_class_separation(capsys, tmp_path):
    source, samples, targets = _letter_corpus(tmp_path)
    splits = split(samples, SplitSpec(train_count=180, val_count=40,
                                      test_count=70, seed=8))
    epochs = 20 if len(targets) > 1 else 8
    outcomes = []
    ok = True
    for regime, floor in targets:
        config = dataclasses.replace(small_test_config(),
                                     seed=derive_seed(8, "init"))
        model = build_model(config)
        train(model, splits, policy_for(regime), epochs=epochs,
              batch_size=8, seed=8, lr=1e-3)
        low = min(evaluate(model, splits.test).auc)
        outcomes.append(f"{regime}: min test AUC {low:.3f} >= {floor}")
        ok = ok and low >= floor
    _report(capsys, 8, "two-class letter separation", ok,
            f"source: {source}; " + "; ".join(outcomes))


def test_criterion_9_bitwise_determinism(capsys, tmp_path):
    data_dir = tmp_path / "glyphs"
    make_glyph_dataset(data_dir, classes=("A", "H"), per_class=12,
                       side=12, seed=9)
    config = {
        "seed": 9,
        "dataset_root": str(data_dir),
        "classes": ["A", "H"],
        "split": {"train_count": 12, "val_count": 4, "test_count": 8},
        "model": {"input_side": 12, "conv_filters": 4, "conv_kernel": 5,
                  "primary_caps_channels": 2, "primary_caps_dim": 2,
                  "primary_kernel": 5, "primary_stride": 1,
                  "num_classes": 2, "class_caps_dim": 4,
                  "routing_iterations": 3},
        "train": {"epochs": 4, "batch_size": 4, "lr": 0.002},
        "augment": {"regime": "lossy"},
    }
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(config))

    histories, checkpoints = [], []
    for name in ("one", "two"):
        out = tmp_path / name
        rc = main(["train", "--config", str(cfg_path), "--out", str(out)])
        assert rc == 0
        rows = (out / "history.csv").read_text().splitlines()
        histories.append([",".join(r.split(",")[:-1]) for r in rows])
        checkpoints.append((out / "model.ckpt").read_bytes())

    same_history = histories[0] == histories[1]
    same_ckpt = checkpoints[0] == checkpoints[1]
    ok = same_history and same_ckpt
    _report(capsys, 9, "bitwise determinism", ok,
            f"history identical modulo wall_seconds column {same_history}, "
            f"checkpoints byte-identical {same_ckpt}")
