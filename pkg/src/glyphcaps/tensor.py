"""Dense float64 tensors with reverse-mode automatic differentiation.

Every value is a C-contiguous float64 numpy array wrapped in an immutable
Tensor. Operations optionally record onto an ambient Tape; each recorded node
carries a closure that maps the output gradient to input gradients. A single
reverse sweep over the tape (which is already in topological order, because it
is append-only and operands must exist before results) accumulates gradients
for every leaf marked requires_grad.

Broadcasting is deliberately not supported: elementwise ops take equal shapes
or a python scalar second operand, nothing else. Shape mismatches raise
immediately instead of silently broadcasting.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "tensor_from",
    "zeros",
    "full",
    "add",
    "sub",
    "mul",
    "div",
    "scale",
    "relu",
    "sigmoid",
    "log",
    "clamp",
    "matmul",
    "batched_matvec",
    "conv2d",
    "softmax_axis",
    "reduce_sum",
    "norm_last_axis",
    "reshape",
    "transpose",
    "expand_last_axis",
    "expand_first_axis",
    "backward",
    "finite_diff_check",
]


class Tensor:
    """Immutable float64 array. `requires_grad` marks trainable leaves."""

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64, order="C")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "requires_grad", bool(requires_grad))

    def __setattr__(self, name, value):
        raise AttributeError("Tensor is immutable")

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool = False) -> "Tensor":
        # Internal fast path for op outputs: takes ownership, skips the copy.
        # (ascontiguousarray would promote rank-0 arrays to shape (1,), so
        # only invoke it when the layout actually needs fixing.)
        out = object.__new__(cls)
        arr = np.asarray(arr, dtype=np.float64)
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        if arr.flags.writeable:
            arr.flags.writeable = False
        object.__setattr__(out, "data", arr)
        object.__setattr__(out, "requires_grad", bool(requires_grad))
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def tolist(self):
        return self.data.tolist()

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


class _Node:
    """One recorded operation: output, inputs, and the gradient closure."""

    __slots__ = ("out", "inputs", "vjp")

    def __init__(self, out: Tensor, inputs: tuple[Tensor, ...], vjp: Callable):
        self.out = out
        self.inputs = inputs
        self.vjp = vjp


class Tape:
    """Records operations for one forward pass. Use as a context manager."""

    current: "Tape | None" = None

    def __init__(self):
        self.nodes: list[_Node] = []
        self._tracked: set[int] = set()
        self._leaves: dict[int, Tensor] = {}

    def __enter__(self) -> "Tape":
        if Tape.current is not None:
            raise RuntimeError("a Tape is already active; tapes do not nest")
        Tape.current = self
        return self

    def __exit__(self, exc_type, exc, tb):
        Tape.current = None
        return False

    def follows(self, t: Tensor) -> bool:
        return t.requires_grad or id(t) in self._tracked


def _record(out: Tensor, inputs: tuple, vjp: Callable) -> Tensor:
    """Attach `out` to the active tape if any input participates in the graph."""
    tape = Tape.current
    if tape is None:
        return out
    track = False
    for t in inputs:
        if isinstance(t, Tensor):
            if t.requires_grad:
                tape._leaves[id(t)] = t
                track = True
            elif id(t) in tape._tracked:
                track = True
    if track:
        tape._tracked.add(id(out))
        tape.nodes.append(_Node(out, tuple(t for t in inputs if isinstance(t, Tensor)), vjp))
    return out


# ---------------------------------------------------------------------------
# construction


def tensor_from(shape: Sequence[int], data: Sequence[float], requires_grad: bool = False) -> Tensor:
    """Build a tensor from an explicit shape and row-major flat data."""
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0:
        raise ValueError("shape must have at least one dimension")
    for s in shape:
        if s < 1:
            raise ValueError(f"shape dimensions must be >= 1, got {shape}")
    flat = np.array(data, dtype=np.float64).reshape(-1)
    expected = math.prod(shape)
    if flat.size != expected:
        raise ValueError(f"shape {shape} needs {expected} values, got {flat.size}")
    return Tensor._wrap(flat.reshape(shape), requires_grad=requires_grad)


def zeros(shape: Sequence[int], requires_grad: bool = False) -> Tensor:
    return Tensor._wrap(np.zeros(tuple(shape), dtype=np.float64), requires_grad=requires_grad)


def full(shape: Sequence[int], value: float, requires_grad: bool = False) -> Tensor:
    return Tensor._wrap(
        np.full(tuple(shape), float(value), dtype=np.float64), requires_grad=requires_grad
    )


# ---------------------------------------------------------------------------
# elementwise ops


def _coerce_pair(a: Tensor, b, op_name: str):
    """Return (b_array_or_scalar, b_is_tensor). Enforces the no-broadcasting rule."""
    if isinstance(b, Tensor):
        if a.shape != b.shape:
            raise ValueError(f"{op_name}: shape mismatch {a.shape} vs {b.shape}; "
                             "implicit broadcasting is not supported")
        return b, True
    if isinstance(b, (int, float)) and not isinstance(b, bool):
        return float(b), False
    raise TypeError(f"{op_name}: second operand must be a Tensor or a scalar, got {type(b)}")


def add(a: Tensor, b) -> Tensor:
    b, is_t = _coerce_pair(a, b, "add")
    out = Tensor._wrap(a.data + (b.data if is_t else b))

    if is_t:
        def vjp(g):
            return g, g
        return _record(out, (a, b), vjp)

    def vjp(g):
        return (g,)
    return _record(out, (a,), vjp)


def sub(a: Tensor, b) -> Tensor:
    b, is_t = _coerce_pair(a, b, "sub")
    out = Tensor._wrap(a.data - (b.data if is_t else b))

    if is_t:
        def vjp(g):
            return g, -g
        return _record(out, (a, b), vjp)

    def vjp(g):
        return (g,)
    return _record(out, (a,), vjp)


def mul(a: Tensor, b) -> Tensor:
    b, is_t = _coerce_pair(a, b, "mul")
    if is_t:
        out = Tensor._wrap(a.data * b.data)
        a_data, b_data = a.data, b.data

        def vjp(g):
            return g * b_data, g * a_data
        return _record(out, (a, b), vjp)

    out = Tensor._wrap(a.data * b)

    def vjp(g):
        return (g * b,)
    return _record(out, (a,), vjp)


def div(a: Tensor, b) -> Tensor:
    b, is_t = _coerce_pair(a, b, "div")
    if is_t:
        if np.any(b.data == 0.0):
            raise ZeroDivisionError("div: divisor tensor contains zero")
        out = Tensor._wrap(a.data / b.data)
        a_data, b_data = a.data, b.data

        def vjp(g):
            return g / b_data, -g * a_data / (b_data * b_data)
        return _record(out, (a, b), vjp)

    if b == 0.0:
        raise ZeroDivisionError("div: scalar divisor is zero")
    out = Tensor._wrap(a.data / b)

    def vjp(g):
        return (g / b,)
    return _record(out, (a,), vjp)


def scale(a: Tensor, k: float) -> Tensor:
    k = float(k)
    out = Tensor._wrap(a.data * k)

    def vjp(g):
        return (g * k,)
    return _record(out, (a,), vjp)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0
    out = Tensor._wrap(np.where(mask, a.data, 0.0))

    def vjp(g):
        return (g * mask,)
    return _record(out, (a,), vjp)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # Split by sign so exp never overflows.
    s = np.where(x >= 0.0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = Tensor._wrap(s)

    def vjp(g):
        return (g * s * (1.0 - s),)
    return _record(out, (a,), vjp)


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise ValueError("log: all elements must be strictly positive")
    out = Tensor._wrap(np.log(a.data))
    a_data = a.data

    def vjp(g):
        return (g / a_data,)
    return _record(out, (a,), vjp)


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    lo, hi = float(lo), float(hi)
    if lo > hi:
        raise ValueError(f"clamp: lo {lo} exceeds hi {hi}")
    out = Tensor._wrap(np.clip(a.data, lo, hi))
    inside = (a.data >= lo) & (a.data <= hi)

    def vjp(g):
        return (g * inside,)
    return _record(out, (a,), vjp)


# ---------------------------------------------------------------------------
# contractions


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul: expects rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: inner dimensions differ, {a.shape} vs {b.shape}")
    out = Tensor._wrap(a.data @ b.data)
    a_data, b_data = a.data, b.data

    def vjp(g):
        return g @ b_data.T, a_data.T @ g
    return _record(out, (a, b), vjp)


def batched_matvec(a: Tensor, x: Tensor) -> Tensor:
    """Per-batch matrix-vector product: a [B,m,k] with x [B,k] -> [B,m]."""
    if a.data.ndim != 3 or x.data.ndim != 2:
        raise ValueError(f"batched_matvec: expects [B,m,k] and [B,k], got {a.shape} and {x.shape}")
    if a.shape[0] != x.shape[0] or a.shape[2] != x.shape[1]:
        raise ValueError(f"batched_matvec: incompatible shapes {a.shape} and {x.shape}")
    out = Tensor._wrap(np.einsum("bmk,bk->bm", a.data, x.data))
    a_data, x_data = a.data, x.data

    def vjp(g):
        da = np.einsum("bm,bk->bmk", g, x_data)
        dx = np.einsum("bm,bmk->bk", g, a_data)
        return da, dx
    return _record(out, (a, x), vjp)


def conv2d(inp: Tensor, kernels: Tensor, stride: int = 1, padding: str = "valid",
           bias: Tensor | None = None) -> Tensor:
    """2-D cross-correlation of [C_in,H,W] with [C_out,C_in,kh,kw], valid padding.

    `bias`, when given, is a [C_out] tensor added to every output location of
    its channel (a fused convenience; omit it for the bare contraction).
    """
    if padding != "valid":
        raise ValueError(f"conv2d: only 'valid' padding is supported, got {padding!r}")
    stride = int(stride)
    if stride < 1:
        raise ValueError(f"conv2d: stride must be >= 1, got {stride}")
    if inp.data.ndim != 3 or kernels.data.ndim != 4:
        raise ValueError(f"conv2d: expects input [C,H,W] and kernels [F,C,kh,kw], "
                         f"got {inp.shape} and {kernels.shape}")
    c_in, h, w = inp.shape
    c_out, kc, kh, kw = kernels.shape
    if kc != c_in:
        raise ValueError(f"conv2d: kernel channels {kc} do not match input channels {c_in}")
    if kh > h or kw > w:
        raise ValueError(f"conv2d: kernel {kh}x{kw} larger than input {h}x{w}")
    h_out = (h - kh) // stride + 1
    w_out = (w - kw) // stride + 1
    if bias is not None and bias.shape != (c_out,):
        raise ValueError(f"conv2d: bias shape {bias.shape} does not match {c_out} filters")

    windows = np.lib.stride_tricks.sliding_window_view(inp.data, (kh, kw), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]          # [C_in, h_out, w_out, kh, kw]
    result = np.einsum("ixykl,oikl->oxy", windows, kernels.data)
    if bias is not None:
        result = result + bias.data[:, None, None]
    out = Tensor._wrap(result)
    inp_data, kern_data = inp.data, kernels.data

    def vjp(g):
        dk = np.einsum("oxy,ixykl->oikl", g, windows)
        spread = np.einsum("oxy,oikl->ixykl", g, kern_data)
        dinp = np.zeros_like(inp_data)
        for a in range(kh):
            for b in range(kw):
                dinp[:, a:a + stride * h_out:stride,
                     b:b + stride * w_out:stride] += spread[:, :, :, a, b]
        if bias is not None:
            return dinp, dk, g.sum(axis=(1, 2))
        return dinp, dk
    if bias is not None:
        return _record(out, (inp, kernels, bias), vjp)
    return _record(out, (inp, kernels), vjp)


# ---------------------------------------------------------------------------
# reductions and normalizers


def softmax_axis(a: Tensor, axis: int) -> Tensor:
    nd = a.data.ndim
    if not -nd <= axis < nd:
        raise ValueError(f"softmax_axis: axis {axis} out of range for shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    out = Tensor._wrap(s)

    def vjp(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)
    return _record(out, (a,), vjp)


def reduce_sum(a: Tensor, axis: int | None = None) -> Tensor:
    """Sum over one axis (dropping it) or over all elements (rank-0 result)."""
    in_shape = a.shape
    if axis is None:
        out = Tensor._wrap(np.array(a.data.sum()))

        def vjp(g):
            return (np.full(in_shape, float(g)),)
        return _record(out, (a,), vjp)

    nd = a.data.ndim
    if not -nd <= axis < nd:
        raise ValueError(f"reduce_sum: axis {axis} out of range for shape {a.shape}")
    axis = axis % nd
    out = Tensor._wrap(a.data.sum(axis=axis))

    def vjp(g):
        return (np.broadcast_to(np.expand_dims(g, axis), in_shape).copy(),)
    return _record(out, (a,), vjp)


def norm_last_axis(a: Tensor) -> Tensor:
    """Euclidean norm along the last axis. Subgradient at zero vectors is zero."""
    r = np.sqrt(np.square(a.data).sum(axis=-1))
    out = Tensor._wrap(r)
    a_data = a.data

    def vjp(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = np.where(r > 0.0, g / np.where(r > 0.0, r, 1.0), 0.0)
        return (a_data * coef[..., None],)
    return _record(out, (a,), vjp)


# ---------------------------------------------------------------------------
# shape ops


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if math.prod(shape) != a.size:
        raise ValueError(f"reshape: cannot view {a.shape} as {shape}")
    in_shape = a.shape
    out = Tensor._wrap(a.data.reshape(shape))

    def vjp(g):
        return (g.reshape(in_shape),)
    return _record(out, (a,), vjp)


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(int(x) for x in axes)
    if sorted(axes) != list(range(a.data.ndim)):
        raise ValueError(f"transpose: axes {axes} is not a permutation for shape {a.shape}")
    inverse = tuple(np.argsort(axes))
    out = Tensor._wrap(np.transpose(a.data, axes))

    def vjp(g):
        return (np.transpose(g, inverse),)
    return _record(out, (a,), vjp)


def expand_last_axis(a: Tensor, n: int) -> Tensor:
    """Repeat each element n times along a new trailing axis."""
    n = int(n)
    if n < 1:
        raise ValueError(f"expand_last_axis: n must be >= 1, got {n}")
    out = Tensor._wrap(np.broadcast_to(a.data[..., None], a.shape + (n,)).copy())

    def vjp(g):
        return (g.sum(axis=-1),)
    return _record(out, (a,), vjp)


def expand_first_axis(a: Tensor, n: int) -> Tensor:
    """Repeat the whole tensor n times along a new leading axis."""
    n = int(n)
    if n < 1:
        raise ValueError(f"expand_first_axis: n must be >= 1, got {n}")
    out = Tensor._wrap(np.broadcast_to(a.data[None, ...], (n,) + a.shape).copy())

    def vjp(g):
        return (g.sum(axis=0),)
    return _record(out, (a,), vjp)


# ---------------------------------------------------------------------------
# reverse pass


def backward(loss: Tensor, tape: Tape) -> dict[Tensor, Tensor]:
    """Run the reverse sweep; return gradients for every requires_grad leaf.

    The seed gradient is 1. Leaves the loss does not depend on get zero
    gradients of their own shape. Raises if the loss is not a single element
    or was never recorded on this tape.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must have a single element, got shape {loss.shape}")
    if id(loss) not in tape._tracked:
        raise ValueError("backward: loss was not recorded on this tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        for t, gin in zip(node.inputs, node.vjp(g)):
            if gin is None or not tape.follows(t):
                continue
            acc = grads.get(id(t))
            grads[id(t)] = gin if acc is None else acc + gin

    result: dict[Tensor, Tensor] = {}
    for leaf in tape._leaves.values():
        g = grads.get(id(leaf))
        result[leaf] = Tensor._wrap(g.copy() if g is not None else np.zeros_like(leaf.data))
    return result


# ---------------------------------------------------------------------------
# finite-difference verification


def finite_diff_check(f: Callable, params: Sequence[Tensor], eps: float = 1e-5,
                      per_param: bool = False):
    """Compare analytic gradients of f(params) against central differences.

    f maps a list of tensors to a single-element Tensor. Every element of
    every parameter is perturbed by +/- eps to build that parameter's numeric
    gradient; its relative error is the Euclidean distance between analytic
    and numeric gradients over max(|analytic|, |numeric|, 1e-8), with |.| the
    gradient magnitude. Magnitudes keep the comparison meaningful where a
    single element's true derivative is at or below the difference quotient's
    own float64 noise. Returns the maximum relative error over the parameter
    list, or the per-parameter errors when `per_param` is set.
    """
    eps = float(eps)
    grad_params = [Tensor(p.data, requires_grad=True) for p in params]
    with Tape() as tape:
        loss = f(grad_params)
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise ValueError("finite_diff_check: f must return a single-element Tensor")
    grad_map = backward(loss, tape)
    # Parameters f never touched have zero gradients everywhere.
    analytic = [grad_map[p].data if p in grad_map else np.zeros_like(p.data)
                for p in grad_params]

    base = [Tensor(p.data) for p in params]
    errors = []
    for i, p in enumerate(base):
        flat = p.data.reshape(-1)
        numeric = np.empty(flat.size)
        for j in range(flat.size):
            bumped = flat.copy()
            bumped[j] += eps
            plus = list(base)
            plus[i] = Tensor._wrap(bumped.reshape(p.shape))
            bumped = flat.copy()
            bumped[j] -= eps
            minus = list(base)
            minus[i] = Tensor._wrap(bumped.reshape(p.shape))
            numeric[j] = (f(plus).item() - f(minus).item()) / (2.0 * eps)
        a = analytic[i].reshape(-1)
        norm_a = float(np.linalg.norm(a))
        norm_n = float(np.linalg.norm(numeric))
        errors.append(float(np.linalg.norm(a - numeric)) / max(norm_a, norm_n, 1e-8))
    if per_param:
        return errors
    return max(errors) if errors else 0.0
