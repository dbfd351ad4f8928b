"""A walk through the numerics core: build a graph, differentiate it,
check the gradients against finite differences, and run Adam.

Run: python3 demos/01_autodiff_basics.py
"""

import numpy as np

from chromatix.numerics import AdamState, Graph, adam_step, gradcheck

# ---------------------------------------------------------------------------
# 1. Tensors are plain numpy arrays in NCHW order. A Graph is a tape:
#    every op call computes its value immediately and records the node.

g = Graph()
image = g.leaf(np.linspace(0, 1, 36, dtype=np.float32).reshape(1, 1, 6, 6))
kernel = g.leaf(np.full((1, 1, 3, 3), 1.0 / 9.0, dtype=np.float32))
blurred = g.conv2d(image, kernel, padding=1)
print("conv output extents:", blurred.shape)
print("centre of the blurred ramp:\n", blurred.value[0, 0, 2:4, 2:4])

# ---------------------------------------------------------------------------
# 2. backward() fills .grad for everything the loss touches.

loss = g.sum(g.mul(blurred, blurred))
g.backward(loss)
print("\nd loss / d kernel:\n", kernel.grad[0, 0])

# ---------------------------------------------------------------------------
# 3. The same machinery supports strided, dilated, and transposed
#    convolutions, batch norm, bilinear resizing and the loss heads.
#    gradcheck replays a graph in float64 and compares against central
#    finite differences.


def build(graph, leaves):
    x, w = leaves
    y = graph.relu(graph.conv2d(x, w, stride=2, padding=1))
    return graph.sum(graph.mul(y, y))


rng = np.random.default_rng(0)
err = gradcheck(build, [rng.standard_normal((1, 2, 8, 8)) + 0.3,
                        rng.standard_normal((4, 2, 3, 3))])
print(f"\ngradcheck max relative error: {err:.2e} (threshold 1e-4)")

# ---------------------------------------------------------------------------
# 4. Adam with bias correction. First step moves each weight by about lr.

params = {"x": np.array([3.0])}
state = AdamState(lr=0.05)
trace = []
for step in range(120):
    grad = {"x": 2.0 * params["x"]}          # d/dx of x^2
    adam_step(params, grad, state)
    trace.append(float(params["x"][0]))
print("\nAdam on f(x) = x^2 from x=3:")
print("  after 1 step  x =", f"{trace[0]:.4f}")
print("  after 120     x =", f"{trace[-1]:.4f}")
