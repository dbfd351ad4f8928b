"""Finite-difference verification of tape gradients.

Checks run the tape in float64; central differences with h=1e-4 give
truncation error around 1e-8, far below the 1e-4 acceptance threshold,
so any larger disagreement points at a backward kernel bug.
"""

from __future__ import annotations

import numpy as np

from .graph import Graph


def numeric_gradient(f, arrays, h: float = 1e-4):
    """Central-difference gradient of scalar f w.r.t. each array in arrays."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a, dtype=np.float64)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = np.asarray(f(arrays)).item()
            flat[i] = orig - h
            down = np.asarray(f(arrays)).item()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max elementwise |a - n| / max(1, |a|, |n|)."""
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def gradcheck(build, arrays, h: float = 1e-4) -> float:
    """Compare tape gradients against central differences.

    build(graph, leaves) must construct and return a scalar loss node from
    the given leaf nodes. arrays are the float64 leaf values. Returns the
    max relative error over all leaves.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]

    g = Graph(dtype=np.float64)
    leaves = [g.leaf(a, trainable=True) for a in arrays]
    loss = build(g, leaves)
    analytic = g.gradients(loss, leaves)

    def evaluate(vals):
        gg = Graph(dtype=np.float64)
        ll = [gg.leaf(v) for v in vals]
        return build(gg, ll).value

    numeric = numeric_gradient(evaluate, arrays, h=h)
    return max(relative_error(a, n) for a, n in zip(analytic, numeric))
