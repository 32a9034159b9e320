"""Synthetic letter-glyph rendering for self-contained experiments.

Letters are stroke templates in a unit box, rasterized with supersampled
antialiased lines and per-sample jitter (endpoint noise, global offset, small
rotation, intensity scale). `make_glyph_dataset` writes a ``<root>/<CLASS>/
*.png`` tree the dataset loader consumes, so the whole train/eval pipeline
can run without any external corpus.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

__all__ = ["GLYPH_STROKES", "render_glyph", "make_glyph_dataset", "save_png"]

# Each stroke is ((x0, y0), (x1, y1)) in a unit box; x grows right, y grows down.
GLYPH_STROKES: dict[str, tuple[tuple[tuple[float, float], tuple[float, float]], ...]] = {
    "A": (((0.50, 0.08), (0.12, 0.92)),
          ((0.50, 0.08), (0.88, 0.92)),
          ((0.28, 0.62), (0.72, 0.62))),
    "H": (((0.15, 0.08), (0.15, 0.92)),
          ((0.85, 0.08), (0.85, 0.92)),
          ((0.15, 0.50), (0.85, 0.50))),
    "T": (((0.10, 0.10), (0.90, 0.10)),
          ((0.50, 0.10), (0.50, 0.90))),
    "V": (((0.10, 0.08), (0.50, 0.92)),
          ((0.90, 0.08), (0.50, 0.92))),
    "L": (((0.20, 0.08), (0.20, 0.92)),
          ((0.20, 0.92), (0.80, 0.92))),
    "X": (((0.15, 0.10), (0.85, 0.90)),
          ((0.85, 0.10), (0.15, 0.90))),
}

_SUPERSAMPLE = 4


def render_glyph(name: str, side: int, rng: np.random.Generator) -> np.ndarray:
    """Rasterize one jittered glyph -> float64 [side, side] in [0, 1].

    Draw order per sample is fixed: rotation, global offset (x, y), intensity,
    then two coordinates of endpoint noise per stroke endpoint.
    """
    if name not in GLYPH_STROKES:
        raise ValueError(f"render_glyph: no stroke template for {name!r}; "
                         f"available: {sorted(GLYPH_STROKES)}")
    side = int(side)
    if side < 8:
        raise ValueError(f"render_glyph: side must be >= 8, got {side}")

    angle = rng.uniform(-8.0, 8.0)
    offset = rng.uniform(-0.04, 0.04, size=2)
    intensity = rng.uniform(0.75, 1.0)
    theta = math.radians(angle)
    cos_t, sin_t = math.cos(theta), math.sin(theta)

    big = side * _SUPERSAMPLE
    img = Image.new("L", (big, big), 0)
    draw = ImageDraw.Draw(img)
    stroke_width = max(2, round(0.09 * big))
    for (x0, y0), (x1, y1) in GLYPH_STROKES[name]:
        pts = []
        for x, y in ((x0, y0), (x1, y1)):
            x += float(rng.normal(0.0, 0.015))
            y += float(rng.normal(0.0, 0.015))
            # rotate about the box center, then offset
            rx = cos_t * (x - 0.5) - sin_t * (y - 0.5) + 0.5 + offset[0]
            ry = sin_t * (x - 0.5) + cos_t * (y - 0.5) + 0.5 + offset[1]
            pts.append((rx * (big - 1), ry * (big - 1)))
        draw.line(pts, fill=255, width=stroke_width)
    small = img.resize((side, side), Image.BILINEAR)
    return np.asarray(small, dtype=np.float64) / 255.0 * intensity


def save_png(plane: np.ndarray, path) -> None:
    """Write a [0, 1] float image as an 8-bit grayscale PNG."""
    arr = np.clip(np.asarray(plane, dtype=np.float64), 0.0, 1.0)
    Image.fromarray(np.round(arr * 255.0).astype(np.uint8), mode="L").save(path)


def make_glyph_dataset(root, classes=("A", "H"), per_class: int = 145,
                       side: int = 28, seed: int = 0) -> Path:
    """Render a PNG directory tree of jittered glyphs; returns the root path.

    Deterministic for a given seed: one generator drives all classes in the
    given order, samples within a class in index order.
    """
    root = Path(root)
    rng = np.random.default_rng(seed)
    for name in classes:
        class_dir = root / name
        class_dir.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            plane = render_glyph(name, side, rng)
            save_png(plane, class_dir / f"{name}_{i:04d}.png")
    return root
