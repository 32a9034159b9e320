"""Capsule classifier with routing by agreement.

Architecture: one plain convolution with ReLU, one capsule-forming
convolution whose output channels are regrouped into pose vectors and
squashed, then a learned linear map from every primary capsule to every class
capsule followed by iterative routing. Class probabilities are the clamped
lengths of the class capsules.

All parameters and activations live on the autodiff tape from `tensor`;
gradients flow through every routing iteration.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass

import numpy as np

from .tensor import (
    Tensor,
    add,
    batched_matvec,
    clamp,
    conv2d,
    div,
    expand_first_axis,
    expand_last_axis,
    log,
    mul,
    norm_last_axis,
    reduce_sum,
    relu,
    reshape,
    scale,
    softmax_axis,
    transpose,
    zeros,
)

__all__ = [
    "ModelConfig",
    "CapsNetModel",
    "full_scale_config",
    "small_test_config",
    "build_model",
    "squash",
    "primary_caps_forward",
    "routing",
    "forward",
    "bce_loss",
    "param_count",
    "param_count_formula",
    "save_model",
    "load_model",
]

PROB_FLOOR = 1e-7

_CHECKPOINT_MAGIC = b"GCAPS01\n"


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters that fix the network's shape and initialization."""

    input_side: int
    conv_filters: int
    conv_kernel: int
    primary_caps_channels: int
    primary_caps_dim: int
    primary_kernel: int
    primary_stride: int
    num_classes: int
    class_caps_dim: int
    routing_iterations: int = 3
    seed: int = 0

    def __post_init__(self):
        for name in ("input_side", "conv_filters", "conv_kernel", "primary_caps_channels",
                     "primary_caps_dim", "primary_kernel", "primary_stride", "num_classes",
                     "class_caps_dim", "routing_iterations"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ValueError(f"ModelConfig.{name} must be a positive integer, got {v!r}")
        if self.conv_out_side < 1:
            raise ValueError(
                f"ModelConfig: conv kernel {self.conv_kernel} does not fit input side "
                f"{self.input_side}")
        if self.conv_out_side < self.primary_kernel:
            raise ValueError(
                f"ModelConfig: primary kernel {self.primary_kernel} does not fit conv output "
                f"side {self.conv_out_side}")
        if self.primary_caps_count < self.num_classes:
            raise ValueError(
                f"ModelConfig: {self.primary_caps_count} primary capsules cannot route to "
                f"{self.num_classes} classes; need at least one per class")

    @property
    def conv_out_side(self) -> int:
        return self.input_side - self.conv_kernel + 1

    @property
    def primary_out_side(self) -> int:
        return (self.conv_out_side - self.primary_kernel) // self.primary_stride + 1

    @property
    def primary_caps_count(self) -> int:
        return self.primary_caps_channels * self.primary_out_side ** 2


def full_scale_config(seed: int = 0) -> ModelConfig:
    """Full-size configuration: 64x64 input, 34 classes, >8e7 parameters."""
    return ModelConfig(
        input_side=64, conv_filters=256, conv_kernel=9,
        primary_caps_channels=32, primary_caps_dim=8, primary_kernel=9, primary_stride=2,
        num_classes=34, class_caps_dim=16, routing_iterations=3, seed=seed)


def small_test_config(seed: int = 0) -> ModelConfig:
    """Desk-size configuration used by gradient checks and overfit runs."""
    return ModelConfig(
        input_side=28, conv_filters=8, conv_kernel=9,
        primary_caps_channels=4, primary_caps_dim=4, primary_kernel=9, primary_stride=2,
        num_classes=2, class_caps_dim=8, routing_iterations=3, seed=seed)


class CapsNetModel:
    """Parameter container. Forward passes are free functions over it."""

    def __init__(self, config: ModelConfig, conv_kernels: Tensor, conv_bias: Tensor,
                 primary_kernels: Tensor, primary_bias: Tensor, transform: Tensor):
        self.config = config
        self.conv_kernels = conv_kernels
        self.conv_bias = conv_bias
        self.primary_kernels = primary_kernels
        self.primary_bias = primary_bias
        self.transform = transform

    def parameters(self) -> dict[str, Tensor]:
        return {
            "conv_kernels": self.conv_kernels,
            "conv_bias": self.conv_bias,
            "primary_kernels": self.primary_kernels,
            "primary_bias": self.primary_bias,
            "transform": self.transform,
        }

    def set_parameters(self, params: dict[str, Tensor]) -> None:
        current = self.parameters()
        if set(params) != set(current):
            raise ValueError(f"set_parameters: expected keys {sorted(current)}, "
                             f"got {sorted(params)}")
        for name, tensor in params.items():
            if tensor.shape != current[name].shape:
                raise ValueError(f"set_parameters: {name} shape {tensor.shape} does not match "
                                 f"{current[name].shape}")
            setattr(self, name, tensor)


def build_model(config: ModelConfig) -> CapsNetModel:
    """He-normal kernels and transform, zero biases, all from config.seed.

    Draw order is fixed (conv kernels, primary kernels, transform) so a seed
    pins every weight bit-for-bit.
    """
    rng = np.random.default_rng(config.seed)

    def he(shape, fan_in):
        std = np.sqrt(2.0 / fan_in)
        draw = rng.standard_normal(shape)
        draw *= std
        return Tensor._wrap(draw, requires_grad=True)

    k = config.conv_kernel
    conv_kernels = he((config.conv_filters, 1, k, k), fan_in=k * k)
    conv_bias = zeros((config.conv_filters,), requires_grad=True)

    kp = config.primary_kernel
    primary_out_channels = config.primary_caps_channels * config.primary_caps_dim
    primary_kernels = he((primary_out_channels, config.conv_filters, kp, kp),
                         fan_in=config.conv_filters * kp * kp)
    primary_bias = zeros((primary_out_channels,), requires_grad=True)

    transform = he((config.primary_caps_count, config.num_classes,
                    config.class_caps_dim, config.primary_caps_dim),
                   fan_in=config.primary_caps_dim)
    return CapsNetModel(config, conv_kernels, conv_bias, primary_kernels, primary_bias, transform)


def squash(s: Tensor) -> Tensor:
    """v = (|s|^2 / (1 + |s|^2)) * s/|s|, applied along the last axis.

    Built from primitive ops so the tape differentiates it. Zero vectors map
    to zero vectors with zero gradient.
    """
    r = norm_last_axis(s)
    coef = div(r, add(mul(r, r), 1.0))            # |s| / (1 + |s|^2)
    return mul(s, expand_last_axis(coef, s.shape[-1]))


def primary_caps_forward(model: CapsNetModel, features: Tensor) -> Tensor:
    """Capsule-forming convolution over conv features -> squashed poses [N_p, d_u].

    The conv output [channels*dim, hp, wp] regroups so that each capsule is
    the dim-long channel block at one (channel group, row, col) site.
    """
    cfg = model.config
    p = conv2d(features, model.primary_kernels, stride=cfg.primary_stride,
               bias=model.primary_bias)
    hp = cfg.primary_out_side
    grouped = reshape(p, (cfg.primary_caps_channels, cfg.primary_caps_dim, hp, hp))
    ordered = transpose(grouped, (0, 2, 3, 1))
    poses = reshape(ordered, (cfg.primary_caps_count, cfg.primary_caps_dim))
    return squash(poses)


def routing(u_hat: Tensor, iterations: int) -> tuple[Tensor, Tensor]:
    """Routing by agreement over predictions u_hat [N_p, K, d_v].

    Logits start at zero. Each iteration: couplings c = softmax over classes,
    s_j = sum_i c_ij * u_hat_ij, v_j = squash(s_j); all but the last iteration
    then add the agreement u_hat_ij . v_j to the logits. Returns the final
    class capsules [K, d_v] and the final couplings [N_p, K].
    """
    if u_hat.data.ndim != 3:
        raise ValueError(f"routing: u_hat must be [N_p, K, d_v], got {u_hat.shape}")
    iterations = int(iterations)
    if iterations < 1:
        raise ValueError(f"routing: iterations must be >= 1, got {iterations}")
    n_p, num_classes, d_v = u_hat.shape

    b = zeros((n_p, num_classes))
    v = c = None
    for it in range(iterations):
        c = softmax_axis(b, axis=1)
        weighted = mul(expand_last_axis(c, d_v), u_hat)
        s = reduce_sum(weighted, axis=0)
        v = squash(s)
        if it < iterations - 1:
            agreement = reduce_sum(mul(u_hat, expand_first_axis(v, n_p)), axis=2)
            b = add(b, agreement)
    return v, c


def forward(model: CapsNetModel, image: Tensor) -> Tensor:
    """Class probabilities [K] for one [1, S, S] image in [0, 1]."""
    cfg = model.config
    if image.shape != (1, cfg.input_side, cfg.input_side):
        raise ValueError(f"forward: image shape {image.shape} does not match config "
                         f"(1, {cfg.input_side}, {cfg.input_side})")
    x = relu(conv2d(image, model.conv_kernels, stride=1, bias=model.conv_bias))
    u = primary_caps_forward(model, x)
    w = reshape(model.transform,
                (cfg.primary_caps_count, cfg.num_classes * cfg.class_caps_dim,
                 cfg.primary_caps_dim))
    u_hat = reshape(batched_matvec(w, u),
                    (cfg.primary_caps_count, cfg.num_classes, cfg.class_caps_dim))
    v, _ = routing(u_hat, cfg.routing_iterations)
    lengths = norm_last_axis(v)
    return clamp(lengths, PROB_FLOOR, 1.0 - PROB_FLOOR)


def bce_loss(probs: Tensor, target: Tensor) -> Tensor:
    """Mean binary cross-entropy over classes: -(1/K) * sum of per-class terms.

    `target` is a 0/1 vector the same length as `probs`; probs must lie
    strictly inside (0, 1), which forward's clamp guarantees.
    """
    if probs.data.ndim != 1 or probs.shape != target.shape:
        raise ValueError(f"bce_loss: probs {probs.shape} and target {target.shape} must be "
                         "equal-length vectors")
    k = probs.shape[0]
    one_minus_t = Tensor(1.0 - target.data)
    pos = mul(target, log(probs))
    neg = mul(one_minus_t, log(add(scale(probs, -1.0), 1.0)))
    return scale(reduce_sum(add(pos, neg)), -1.0 / k)


def param_count(model) -> int:
    """Total trainable elements across model.parameters()."""
    return int(sum(p.size for p in model.parameters().values()))


def param_count_formula(config: ModelConfig) -> int:
    """Closed-form element count for a ModelConfig, kept independent of build_model."""
    conv = config.conv_filters * (config.conv_kernel ** 2 + 1)
    primary_channels = config.primary_caps_channels * config.primary_caps_dim
    primary = primary_channels * (config.conv_filters * config.primary_kernel ** 2 + 1)
    transform = (config.primary_caps_count * config.num_classes
                 * config.class_caps_dim * config.primary_caps_dim)
    return conv + primary + transform


# ---------------------------------------------------------------------------
# checkpoints
#
# Deterministic binary layout: magic, little-endian u64 header length, JSON
# header (config + ordered tensor index), then each tensor's raw C-order
# little-endian float64 bytes. No timestamps anywhere, so identical models
# serialize to identical bytes.


def save_model(model: CapsNetModel, path) -> None:
    params = model.parameters()
    header = {
        "format": "glyphcaps-checkpoint",
        "version": 1,
        "config": dataclasses.asdict(model.config),
        "tensors": [{"name": name, "shape": list(t.shape)} for name, t in params.items()],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for t in params.values():
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_model(path) -> CapsNetModel:
    with open(path, "rb") as fh:
        magic = fh.read(len(_CHECKPOINT_MAGIC))
        if magic != _CHECKPOINT_MAGIC:
            raise ValueError(f"load_model: {path} is not a checkpoint (bad magic {magic!r})")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("format") != "glyphcaps-checkpoint":
            raise ValueError(f"load_model: unrecognized format {header.get('format')!r}")
        config = ModelConfig(**header["config"])
        tensors: dict[str, Tensor] = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape))
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ValueError(f"load_model: truncated tensor {entry['name']} in {path}")
            arr = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
            tensors[entry["name"]] = Tensor._wrap(arr, requires_grad=True)
    expected = {"conv_kernels", "conv_bias", "primary_kernels", "primary_bias", "transform"}
    if set(tensors) != expected:
        raise ValueError(f"load_model: checkpoint tensors {sorted(tensors)} do not match "
                         f"{sorted(expected)}")
    return CapsNetModel(config, tensors["conv_kernels"], tensors["conv_bias"],
                        tensors["primary_kernels"], tensors["primary_bias"],
                        tensors["transform"])
