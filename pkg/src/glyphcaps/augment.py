"""Training-time image augmentation.

Three regimes:

* ``none``      - identity; images pass through untouched.
* ``lossless``  - random horizontal/vertical flips (fair coins). Pure pixel
                  permutations, so the pixel multiset is preserved exactly.
* ``lossy``     - random affine warp: rotation up to 40 degrees, width/height
                  shifts up to 0.02 of the side, shear up to 0.02, zoom in
                  [0.98, 1.02]. No flips. Resampling is bilinear with
                  nearest-edge handling for out-of-range coordinates.

The affine map acts about the image center c = ((S-1)/2, (S-1)/2): a forward
point p maps to L(p - c) + c + t, where L = rotation(angle) @ shear @
(zoom * I) and t = (dx, dy) in pixels. Warping inverse-maps each output pixel
back into the input, so the composition order is fixed: rotation, then shear,
then zoom, then translation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .tensor import Tensor

__all__ = [
    "AugmentPolicy",
    "AffineParams",
    "IDENTITY_PARAMS",
    "policy_for",
    "sample_params",
    "apply_flips",
    "apply_affine",
    "augment_batch",
    "bilinear_sample",
]

REGIMES = ("none", "lossless", "lossy")


@dataclass(frozen=True)
class AugmentPolicy:
    """Which regime to run and the bounds its draws must respect."""

    regime: str
    rotation_max_deg: float = 40.0
    width_shift_frac: float = 0.02
    height_shift_frac: float = 0.02
    shear_frac: float = 0.02
    zoom_frac: float = 0.02
    flip_horizontal: bool = True
    flip_vertical: bool = True

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"AugmentPolicy: regime must be one of {REGIMES}, "
                             f"got {self.regime!r}")
        for name in ("rotation_max_deg", "width_shift_frac", "height_shift_frac",
                     "shear_frac", "zoom_frac"):
            if getattr(self, name) < 0:
                raise ValueError(f"AugmentPolicy.{name} must be >= 0")
        if self.rotation_max_deg > 180.0:
            raise ValueError(f"AugmentPolicy.rotation_max_deg must be <= 180, "
                             f"got {self.rotation_max_deg}")
        if self.zoom_frac >= 1.0:
            raise ValueError(f"AugmentPolicy.zoom_frac must be < 1, got {self.zoom_frac}")


def policy_for(regime: str) -> AugmentPolicy:
    return AugmentPolicy(regime=regime)


@dataclass(frozen=True)
class AffineParams:
    """One sampled transform. dx/dy are translation in pixels."""

    angle_deg: float = 0.0
    dx: float = 0.0
    dy: float = 0.0
    shear: float = 0.0
    zoom: float = 1.0
    flip_h: bool = False
    flip_v: bool = False

    @property
    def is_identity_affine(self) -> bool:
        return (self.angle_deg == 0.0 and self.dx == 0.0 and self.dy == 0.0
                and self.shear == 0.0 and self.zoom == 1.0)

    @property
    def is_noop(self) -> bool:
        return self.is_identity_affine and not self.flip_h and not self.flip_v


IDENTITY_PARAMS = AffineParams()


def sample_params(policy: AugmentPolicy, rng: np.random.Generator,
                  image_size: tuple[int, int]) -> AffineParams:
    """Draw one transform for an (H, W) image. Draw order is fixed per regime.

    none: no draws. lossless: two coin flips (horizontal, then vertical, each
    only if its policy switch is on). lossy: angle, dx, dy, shear, zoom, with
    the shift bounds scaled from fractions to pixels; never flips.
    """
    if policy.regime == "none":
        return IDENTITY_PARAMS
    if policy.regime == "lossless":
        flip_h = bool(rng.integers(0, 2)) if policy.flip_horizontal else False
        flip_v = bool(rng.integers(0, 2)) if policy.flip_vertical else False
        return replace(IDENTITY_PARAMS, flip_h=flip_h, flip_v=flip_v)
    # lossy
    h, w = image_size
    max_dx = policy.width_shift_frac * w
    max_dy = policy.height_shift_frac * h
    return AffineParams(
        angle_deg=float(rng.uniform(-policy.rotation_max_deg, policy.rotation_max_deg)),
        dx=float(rng.uniform(-max_dx, max_dx)),
        dy=float(rng.uniform(-max_dy, max_dy)),
        shear=float(rng.uniform(-policy.shear_frac, policy.shear_frac)),
        zoom=float(rng.uniform(1.0 - policy.zoom_frac, 1.0 + policy.zoom_frac)),
    )


def _image_plane(image: Tensor) -> np.ndarray:
    if not isinstance(image, Tensor) or image.data.ndim != 3 or image.shape[0] != 1:
        raise ValueError("augmentation expects a [1, H, W] image tensor")
    return image.data[0]


def apply_flips(image: Tensor, flip_h: bool, flip_v: bool) -> Tensor:
    """Mirror the image. Horizontal reverses columns, vertical reverses rows."""
    if not flip_h and not flip_v:
        return image
    plane = _image_plane(image)
    if flip_h:
        plane = plane[:, ::-1]
    if flip_v:
        plane = plane[::-1, :]
    return Tensor._wrap(plane[None, ...].copy())


def bilinear_sample(plane: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample `plane` at float coordinates, clamping to the borders.

    Coordinates outside the image snap to the nearest edge pixel, which
    replicates border rows/columns.
    """
    h, w = plane.shape
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = ys - y0
    fx = xs - x0
    return (plane[y0, x0] * (1.0 - fy) * (1.0 - fx)
            + plane[y0, x1] * (1.0 - fy) * fx
            + plane[y1, x0] * fy * (1.0 - fx)
            + plane[y1, x1] * fy * fx)


def apply_affine(image: Tensor, params: AffineParams) -> Tensor:
    """Warp the image by the sampled affine transform (flips are ignored here)."""
    plane = _image_plane(image)
    h, w = plane.shape
    theta = math.radians(params.angle_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    rotation = np.array([[cos_t, -sin_t], [sin_t, cos_t]])
    shear = np.array([[1.0, params.shear], [0.0, 1.0]])
    linear = rotation @ shear * params.zoom
    inverse = np.linalg.inv(linear)

    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yo, xo = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    rel_x = xo - cx - params.dx
    rel_y = yo - cy - params.dy
    src_x = inverse[0, 0] * rel_x + inverse[0, 1] * rel_y + cx
    src_y = inverse[1, 0] * rel_x + inverse[1, 1] * rel_y + cy
    warped = bilinear_sample(plane, src_y, src_x)
    np.clip(warped, 0.0, 1.0, out=warped)
    return Tensor._wrap(warped[None, ...])


def augment_batch(images: list[Tensor], policy: AugmentPolicy,
                  rng: np.random.Generator) -> list[Tensor]:
    """Independently transform each image; one params draw per image in order."""
    out = []
    for image in images:
        h, w = _image_plane(image).shape
        params = sample_params(policy, rng, (h, w))
        image = apply_flips(image, params.flip_h, params.flip_v)
        if not params.is_identity_affine:
            image = apply_affine(image, params)
        out.append(image)
    return out
