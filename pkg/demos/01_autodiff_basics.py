#!/usr/bin/env python
"""
A tour of the tensor library underneath the capsule network.

Everything trains through a tape-based reverse-mode engine: you open a Tape,
do ordinary-looking math on Tensors, and the tape records one node per
operation. Calling backward() replays the tape in reverse and hands you a
gradient for every requires_grad leaf it saw.

Things to try:

  - change the expression below and re-run; the finite-difference probe at
    the end should keep agreeing with the analytic gradient to ~1e-9

  - route a leaf through some discarded side computation; it still comes
    back with a zero gradient of the right shape, not an error

  - drop the Tape context and note that the math still works; you just
    cannot differentiate it afterwards
"""

import numpy as np

from glyphcaps.tensor import (Tape, Tensor, backward, finite_diff_check,
                              matmul, mul, reduce_sum, relu, scale,
                              tensor_from)

# Two leaves: a 2x3 weight matrix and a 3-vector treated as a column.
w = tensor_from([2, 3], [0.5, -1.0, 2.0, 1.5, 0.25, -0.75], requires_grad=True)
x = tensor_from([3, 1], [1.0, 2.0, 3.0], requires_grad=True)

with Tape() as tape:
    hidden = relu(matmul(w, x))                      # [2, 1]
    loss = scale(reduce_sum(mul(hidden, hidden)), 0.5)   # mean of 2 entries
grads = backward(loss, tape)

print("loss:", float(loss.data))
print("dloss/dw:")
print(grads[w].data)
print("dloss/dx:")
print(grads[x].data)

# Sanity-check one entry of dloss/dw by nudging it both ways.
eps = 1e-6
up = w.data.copy()
up[0, 2] += eps
down = w.data.copy()
down[0, 2] -= eps


def loss_at(weights):
    h = np.maximum(weights @ x.data, 0.0)
    return float(np.mean(h * h))


numeric = (loss_at(up) - loss_at(down)) / (2 * eps)
print(f"probe w[0,2]: analytic {grads[w].data[0, 2]:.9f}  numeric {numeric:.9f}")


# finite_diff_check does the same comparison across whole parameters at once
# and reports a relative error per parameter (norm of the difference over the
# larger norm). This is the exact routine `glyphcaps gradcheck` runs on the
# full network.
def f(params):
    pw, px = params
    h = relu(matmul(pw, px))
    return scale(reduce_sum(mul(h, h)), 0.5)


worst = finite_diff_check(f, [w, x], eps=1e-6)
print(f"finite_diff_check over both leaves: max relative error {worst:.3e}")

# A leaf that only feeds a discarded side computation still gets a gradient
# entry; it is just all zeros.
unused = Tensor(np.ones((4,)), requires_grad=True)
with Tape() as tape:
    _side = mul(unused, 2.0)
    loss = reduce_sum(mul(x, x))
grads = backward(loss, tape)
print("gradient for a leaf the loss never uses:", grads[unused].data)
