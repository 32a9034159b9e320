"""Capsule-network training and evaluation toolkit for tiny glyph datasets.

Pure numpy implementation: a small reverse-mode autodiff tape, a capsule
classifier with routing by agreement, augmentation policies, dataset loading,
an Adam training loop, and evaluation artifacts (ROC/AUC, confusion matrices,
history curves).
"""

__version__ = "0.1.0"

from . import augment, capsnet, config, data, export, glyphs, metrics, tensor, training

__all__ = [
    "__version__",
    "augment",
    "capsnet",
    "config",
    "data",
    "export",
    "glyphs",
    "metrics",
    "tensor",
    "training",
]
