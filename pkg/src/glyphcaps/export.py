"""Artifact writers: history CSV, metrics JSON, ROC/confusion CSVs, SVG plots.

Every writer is deterministic: floats are rendered with repr (shortest exact
round-trip), JSON keys are sorted, and the SVG plots are plain text with no
timestamps. Identical inputs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .metrics import EvalReport
from .training import EpochRecord

__all__ = [
    "write_history_csv",
    "write_metrics_json",
    "write_roc_csvs",
    "write_confusion_csv",
    "write_curve_svgs",
    "export",
    "svg_line_plot",
]

HISTORY_COLUMNS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc", "wall_seconds")

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#17becf", "#e377c2")


def write_history_csv(records: list[EpochRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        for r in records:
            writer.writerow([r.epoch, repr(r.train_loss), repr(r.train_accuracy),
                             repr(r.val_loss), repr(r.val_accuracy), repr(r.wall_seconds)])


def write_metrics_json(report: EvalReport, path) -> None:
    doc = {
        "accuracy": report.accuracy,
        "loss": report.loss,
        "auc": {name: report.auc[i] for i, name in enumerate(report.class_names)},
        "confusion": report.confusion.tolist(),
        "roc": {name: [[fpr, tpr] for fpr, tpr in report.roc[i]]
                for i, name in enumerate(report.class_names)},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_roc_csvs(report: EvalReport, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    written = []
    for i, name in enumerate(report.class_names):
        path = out_dir / f"roc_{name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fpr", "tpr"])
            for fpr, tpr in report.roc[i]:
                writer.writerow([repr(fpr), repr(tpr)])
        written.append(path)
    return written


def write_confusion_csv(report: EvalReport, path) -> None:
    """K rows of K comma-separated integers; rows true class, columns predicted."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for row in report.confusion:
            writer.writerow([int(v) for v in row])


# ---------------------------------------------------------------------------
# SVG plots


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def svg_line_plot(path, title: str, xlabel: str, ylabel: str,
                  series: list[tuple[str, list[float], list[float]]],
                  y_range: tuple[float, float] | None = None) -> None:
    """Write a fixed-size line plot. `series` holds (label, xs, ys) triples."""
    width, height = 640, 480
    left, right, top, bottom = 70, 20, 40, 50
    plot_w = width - left - right
    plot_h = height - top - bottom

    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys if y == y]  # drop NaN
    x_lo, x_hi = (min(xs_all), max(xs_all)) if xs_all else (0.0, 1.0)
    if y_range is not None:
        y_lo, y_hi = y_range
    else:
        y_lo, y_hi = (min(ys_all), max(ys_all)) if ys_all else (0.0, 1.0)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def px(x: float) -> float:
        return left + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return top + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="24" font-size="16" text-anchor="middle" '
        f'font-family="sans-serif">{title}</text>',
        f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" '
        f'stroke="#333333"/>',
    ]
    for tx in _ticks(x_lo, x_hi):
        x = px(tx)
        parts.append(f'<line x1="{x:.2f}" y1="{top + plot_h}" x2="{x:.2f}" '
                     f'y2="{top + plot_h + 5}" stroke="#333333"/>')
        parts.append(f'<text x="{x:.2f}" y="{top + plot_h + 20}" font-size="11" '
                     f'text-anchor="middle" font-family="sans-serif">{tx:.3g}</text>')
    for ty in _ticks(y_lo, y_hi):
        y = py(ty)
        parts.append(f'<line x1="{left - 5}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" '
                     f'stroke="#333333"/>')
        parts.append(f'<text x="{left - 9}" y="{y + 4:.2f}" font-size="11" '
                     f'text-anchor="end" font-family="sans-serif">{ty:.3g}</text>')
    parts.append(f'<text x="{left + plot_w / 2:.1f}" y="{height - 12}" font-size="13" '
                 f'text-anchor="middle" font-family="sans-serif">{xlabel}</text>')
    parts.append(f'<text x="18" y="{top + plot_h / 2:.1f}" font-size="13" '
                 f'text-anchor="middle" font-family="sans-serif" '
                 f'transform="rotate(-90 18 {top + plot_h / 2:.1f})">{ylabel}</text>')

    for idx, (label, xs, ys) in enumerate(series):
        color = _PALETTE[idx % len(_PALETTE)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys) if y == y)
        if pts:
            parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                         f'stroke-width="1.5"/>')
        ly = top + 16 + 16 * idx
        parts.append(f'<line x1="{left + plot_w - 130}" y1="{ly - 4}" '
                     f'x2="{left + plot_w - 110}" y2="{ly - 4}" stroke="{color}" '
                     f'stroke-width="2"/>')
        parts.append(f'<text x="{left + plot_w - 104}" y="{ly}" font-size="12" '
                     f'font-family="sans-serif">{label}</text>')

    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


def write_curve_svgs(records: list[EpochRecord], report: EvalReport | None,
                     out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    epochs = [float(r.epoch) for r in records]
    written = []

    path = out_dir / "accuracy.svg"
    svg_line_plot(path, "Accuracy per epoch", "epoch", "accuracy",
                  [("train", epochs, [r.train_accuracy for r in records]),
                   ("validation", epochs, [r.val_accuracy for r in records])],
                  y_range=(0.0, 1.0))
    written.append(path)

    path = out_dir / "loss.svg"
    svg_line_plot(path, "Loss per epoch", "epoch", "loss",
                  [("train", epochs, [r.train_loss for r in records]),
                   ("validation", epochs, [r.val_loss for r in records])])
    written.append(path)

    if report is not None:
        path = out_dir / "roc.svg"
        series = [("chance", [0.0, 1.0], [0.0, 1.0])]
        for i, name in enumerate(report.class_names):
            series.append((name, [p[0] for p in report.roc[i]],
                           [p[1] for p in report.roc[i]]))
        svg_line_plot(path, "ROC (one vs rest)", "false positive rate",
                      "true positive rate", series, y_range=(0.0, 1.0))
        written.append(path)
    return written


def export(history: list[EpochRecord], report: EvalReport | None, out_dir) -> list[str]:
    """Write every artifact under out_dir; returns the written file names."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    path = out_dir / "history.csv"
    write_history_csv(history, path)
    written.append(path)

    if report is not None:
        path = out_dir / "metrics.json"
        write_metrics_json(report, path)
        written.append(path)
        written.extend(write_roc_csvs(report, out_dir))
        path = out_dir / "confusion.csv"
        write_confusion_csv(report, path)
        written.append(path)

    written.extend(write_curve_svgs(history, report, out_dir))
    return [p.name for p in written]
