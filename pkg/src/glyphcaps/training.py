"""Adam optimization and the epoch training loop.

Adam follows the standard moment recursion with bias correction:
m <- b1*m + (1-b1)*g, v <- b2*v + (1-b2)*g^2, then
param <- param - lr * m_hat / (sqrt(v_hat) + eps). Defaults: lr=1e-4,
b1=0.9, b2=0.999, eps=1e-8.

The training loop shuffles each epoch, augments training images only, averages
BCE over each mini-batch on a single tape, and tracks running train metrics
plus a clean (un-augmented) validation pass per epoch. Given the same seed,
model, and data, reruns are bit-identical.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .augment import AugmentPolicy, augment_batch
from .capsnet import CapsNetModel, bce_loss, forward
from .data import Splits, batches
from .metrics import bce_value, score_samples
from .seeds import derive_seed
from .tensor import Tape, Tensor, add, backward, scale

__all__ = ["AdamState", "EpochRecord", "init_adam", "adam_step", "train"]


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float
    wall_seconds: float


def init_adam(params: dict[str, Tensor], lr: float = 1e-4, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    for name, p in params.items():
        state.m[name] = np.zeros_like(p.data)
        state.v[name] = np.zeros_like(p.data)
    return state


def adam_step(params: dict[str, Tensor], grads: dict[str, Tensor],
              state: AdamState) -> dict[str, Tensor]:
    """One update over all parameters; returns the new parameter tensors.

    The step counter is shared across parameters and advances once per call.
    Non-finite gradients abort with the offending parameter named.
    """
    if set(params) != set(grads):
        raise ValueError(f"adam_step: parameter keys {sorted(params)} do not match "
                         f"gradient keys {sorted(grads)}")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    updated: dict[str, Tensor] = {}
    for name, p in params.items():
        g = grads[name].data
        if g.shape != p.shape:
            raise ValueError(f"adam_step: gradient shape {g.shape} does not match "
                             f"parameter {name} shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise RuntimeError(f"adam_step: non-finite gradient for parameter {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        step_size = state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        updated[name] = Tensor._wrap(p.data - step_size, requires_grad=True)
    return updated


def _one_hot(label: int, k: int) -> Tensor:
    row = np.zeros(k)
    row[label] = 1.0
    return Tensor._wrap(row)


def train(model: CapsNetModel, splits: Splits, policy: AugmentPolicy, epochs: int,
          batch_size: int, seed: int, lr: float = 1e-4) -> list[EpochRecord]:
    """Run the full loop, updating the model in place; returns per-epoch records.

    Shuffle and augmentation randomness derive from `seed` via fixed role
    offsets. Train loss/accuracy are running means over the epoch (each sample
    scored by the weights current when its batch ran); validation metrics come
    from a clean pass after the epoch. Empty validation yields NaN columns.
    """
    epochs = int(epochs)
    if epochs < 1:
        raise ValueError(f"train: epochs must be >= 1, got {epochs}")
    if not splits.train:
        raise ValueError("train: the training split is empty")
    k = model.config.num_classes
    shuffle_rng = np.random.default_rng(derive_seed(seed, "shuffle"))
    augment_rng = np.random.default_rng(derive_seed(seed, "augment"))
    state = init_adam(model.parameters(), lr=lr)

    records: list[EpochRecord] = []
    for epoch in range(1, epochs + 1):
        started = time.perf_counter()
        loss_sum = 0.0
        correct = 0
        seen = 0
        for batch_index, batch in enumerate(
                batches(splits.train, batch_size, shuffle=True, rng=shuffle_rng)):
            images = augment_batch([s.pixels for s in batch], policy, augment_rng)
            with Tape() as tape:
                total = None
                for sample, image in zip(batch, images):
                    probs = forward(model, image)
                    term = bce_loss(probs, _one_hot(sample.label, k))
                    loss_sum += term.item()
                    if int(probs.data.argmax()) == sample.label:
                        correct += 1
                    seen += 1
                    total = term if total is None else add(total, term)
                batch_loss = scale(total, 1.0 / len(batch))
            if not np.isfinite(batch_loss.item()):
                raise RuntimeError(f"train: non-finite loss at epoch {epoch}, "
                                   f"batch {batch_index}")
            grad_map = backward(batch_loss, tape)
            params = model.parameters()
            grads = {name: grad_map[tensor] for name, tensor in params.items()}
            model.set_parameters(adam_step(params, grads, state))

        if splits.val:
            probs, labels = score_samples(model, splits.val)
            val_loss = float(np.mean([bce_value(p, int(lab))
                                      for p, lab in zip(probs, labels)]))
            val_acc = float((probs.argmax(axis=1) == labels).mean())
        else:
            val_loss = float("nan")
            val_acc = float("nan")
        records.append(EpochRecord(
            epoch=epoch,
            train_loss=loss_sum / seen,
            train_accuracy=correct / seen,
            val_loss=val_loss,
            val_accuracy=val_acc,
            wall_seconds=time.perf_counter() - started,
        ))
    return records
