"""Reverse-mode autodiff: record a graph, backpropagate, check against finite differences."""

import numpy as np

from tsan.autodiff import Parameter, Tape, adam_step, ops
from tsan.gradcheck import check_function

rng = np.random.default_rng(0)

# A tiny conv -> pool -> dense stack, recorded on a tape.
w = Parameter(rng.standard_normal((3, 1, 4)).astype(np.float32), "conv.w")
b = Parameter(np.zeros(4, np.float32), "conv.b")
x = rng.standard_normal((2, 10, 1)).astype(np.float32)

with Tape() as tape:
    h = ops.maxpool1d(ops.relu(ops.conv1d(x, w, b)), 2)
    loss = ops.mean(ops.mul(h, h))
tape.backward(loss, [w, b])
print("ops recorded:", len(tape))
print("loss:", loss.item())
print("grad norm (conv.w):", float(np.linalg.norm(w.grad)))

# Finite-difference check of the same expression in float64.
err = check_function(lambda xx, ww, bb: ops.maxpool1d(ops.relu(ops.conv1d(xx, ww, bb)), 2),
                     [x, w.data, b.data])
print(f"max relative error vs central differences: {err:.2e}")

# Adam on f(p) = p^2: the magnitude shrinks every step.
p = Parameter(np.array([1.0]), "p")
for step in range(10):
    with Tape() as tape:
        loss = ops.sum(ops.mul(p, p))
    tape.backward(loss, [p])
    adam_step([p], lr=0.1)
    print(f"step {step + 1:2d}  p = {p.data[0]: .4f}")
