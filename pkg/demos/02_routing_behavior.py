#!/usr/bin/env python
"""
Watching routing-by-agreement make up its mind.

Dynamic routing starts every input capsule undecided (uniform couplings) and
then lets agreement talk: each iteration, capsules that predicted something
close to a class's pooled output get a louder vote for that class next round.

The setup below has four input capsules. Three of them predict nearly the
same pose for class 0; the fourth predicts something unrelated. Watch the
couplings drift toward class 0 for the three agreeing capsules as the
iteration count grows, while every row keeps summing to exactly 1.

Things to try:

  - make the dissenting capsule agree too and watch the drift strengthen

  - scale all predictions down by 10x; smaller vectors squash to shorter
    outputs, agreement signals shrink, and the couplings barely move

  - raise `iterations` past 3; the couplings keep sharpening but with
    diminishing returns
"""

import numpy as np

from glyphcaps.capsnet import routing
from glyphcaps.tensor import Tensor

rng = np.random.default_rng(42)

# u_hat[i, j] is capsule i's predicted pose for class j: 4 capsules,
# 2 classes, 3-dimensional poses.
base = np.array([1.0, -0.5, 0.8])
u_hat = np.zeros((4, 2, 3))
for i in range(3):
    u_hat[i, 0] = base + rng.normal(0.0, 0.05, size=3)   # agree on class 0
    u_hat[i, 1] = rng.normal(0.0, 0.3, size=3)           # noise for class 1
u_hat[3, 0] = [-1.0, 1.0, -1.0]                          # the dissenter
u_hat[3, 1] = rng.normal(0.0, 0.3, size=3)

for iterations in (1, 2, 3):
    v, c = routing(Tensor(u_hat), iterations=iterations)
    print(f"after {iterations} iteration(s):")
    for i in range(4):
        row = c.data[i]
        print(f"  capsule {i}: couplings {row[0]:.4f} / {row[1]:.4f}"
              f"   (sum {row.sum():.15f})")
    lengths = np.linalg.norm(v.data, axis=1)
    print(f"  class capsule lengths: {lengths[0]:.4f} / {lengths[1]:.4f}")
    print()

print("Class 0 collects the agreeing capsules; its output length (the")
print("model's confidence that class 0 is present) grows with each pass,")
print("while the dissenting capsule 3 stays near 50/50.")
