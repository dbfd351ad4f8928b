"""Define-by-run reverse-mode differentiation over the op catalog.

A Graph owns an append-only tape of nodes. Creating a node runs the op
forward immediately; Graph.backward walks the tape in reverse and fills
node.grad for every node that the loss depends on. Tapes are meant to be
built, differentiated, and discarded per step; a Graph instance must not
be shared across concurrent passes.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .ops import OP_CATALOG, ShapeError


class ContractError(ValueError):
    """A caller violated an operation's documented precondition."""


class Node:
    __slots__ = ("graph", "idx", "kind", "inputs", "params", "value", "grad",
                 "ctx", "name", "trainable")

    def __init__(self, graph, idx, kind, inputs, params, value, ctx,
                 name=None, trainable=False):
        self.graph = graph
        self.idx = idx
        self.kind = kind
        self.inputs = inputs
        self.params = params
        self.value = value
        self.grad: Optional[np.ndarray] = None
        self.ctx = ctx
        self.name = name
        self.trainable = trainable

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node({self.idx}:{self.kind}, shape={self.value.shape})"


class Graph:
    """Computation tape. dtype is float32 by default; pass np.float64 to
    run the whole tape in 64-bit for gradient checking."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.nodes: list[Node] = []

    # -- construction -------------------------------------------------------

    @staticmethod
    def _as_value(array, dtype):
        # keep 0-d scalars 0-d (ascontiguousarray would promote them to 1-d)
        value = np.asarray(array, dtype=dtype)
        if value.ndim > 0 and not value.flags.c_contiguous:
            value = np.ascontiguousarray(value)
        return value

    def leaf(self, array, name: Optional[str] = None, trainable: bool = False) -> Node:
        value = self._as_value(array, self.dtype)
        node = Node(self, len(self.nodes), "leaf", (), {}, value, None,
                    name=name, trainable=trainable)
        self.nodes.append(node)
        return node

    def forward(self, kind: str, inputs: Sequence[Node], **params) -> Node:
        """Append an op node, computing its value immediately."""
        if kind not in OP_CATALOG:
            raise ContractError(f"unknown op kind {kind!r}")
        fwd, _, arity = OP_CATALOG[kind]
        inputs = tuple(inputs)
        if arity is not None and len(inputs) != arity:
            raise ShapeError(kind, f"expects {arity} inputs, got {len(inputs)}")
        values = [n.value for n in inputs]
        out, ctx = fwd(values, params)
        out = self._as_value(out, self.dtype)
        node = Node(self, len(self.nodes), kind, inputs, params, out, ctx)
        self.nodes.append(node)
        return node

    # -- differentiation ----------------------------------------------------

    def backward(self, loss: Node) -> None:
        """Populate .grad for every node reachable from loss.

        The loss must be scalar (a single element). Gradients accumulate,
        so fan-out is handled by summation.
        """
        if loss.graph is not self:
            raise ContractError("loss node belongs to a different graph")
        if loss.value.size != 1:
            raise ContractError(
                f"backward needs a scalar loss, got shape {loss.value.shape}")
        for n in self.nodes:
            n.grad = None
        loss.grad = np.ones_like(loss.value)
        for node in reversed(self.nodes[: loss.idx + 1]):
            if node.grad is None or node.kind == "leaf":
                continue
            _, bwd, _ = OP_CATALOG[node.kind]
            in_values = [n.value for n in node.inputs]
            in_grads = bwd(node.ctx, in_values, node.grad)
            for parent, g in zip(node.inputs, in_grads):
                if g is None:
                    continue
                if g.shape != parent.value.shape:
                    raise ShapeError(node.kind,
                                     f"adjoint shape {g.shape} != value shape "
                                     f"{parent.value.shape}")
                if parent.grad is None:
                    parent.grad = g.astype(self.dtype, copy=True)
                else:
                    parent.grad += g

    def gradients(self, loss: Node, leaves: Sequence[Node]) -> list[np.ndarray]:
        """Backward pass returning the gradient for each requested leaf
        (zeros when the loss does not depend on it)."""
        self.backward(loss)
        return [leaf.grad if leaf.grad is not None
                else np.zeros_like(leaf.value) for leaf in leaves]

    # -- convenience builders ------------------------------------------------

    def conv2d(self, x, w, b=None, stride=1, padding=0, dilation=1):
        inputs = (x, w) if b is None else (x, w, b)
        return self.forward("conv2d", inputs, stride=stride, padding=padding,
                            dilation=dilation)

    def conv2d_transpose(self, x, w, b=None, stride=2, padding=1):
        inputs = (x, w) if b is None else (x, w, b)
        return self.forward("conv2d_transpose", inputs, stride=stride,
                            padding=padding)

    def batch_norm(self, x, gamma, beta, state=None, training=True,
                   eps=1e-5, momentum=0.1):
        return self.forward("batch_norm", (x, gamma, beta), state=state,
                            training=training, eps=eps, momentum=momentum)

    def relu(self, x):
        return self.forward("relu", (x,))

    def tanh(self, x):
        return self.forward("tanh", (x,))

    def concat(self, parts, axis=1):
        return self.forward("concat", tuple(parts), axis=axis)

    def upsample_bilinear(self, x, out_h, out_w):
        return self.forward("upsample_bilinear", (x,), out_h=out_h, out_w=out_w)

    def add(self, a, b):
        return self.forward("add", (a, b))

    def sub(self, a, b):
        return self.forward("sub", (a, b))

    def mul(self, a, b):
        return self.forward("mul", (a, b))

    def scale(self, x, c):
        return self.forward("scale", (x,), c=float(c))

    def shift(self, x, c):
        return self.forward("shift", (x,), c=float(c))

    def sum(self, x):
        return self.forward("sum", (x,))

    def mean(self, x):
        return self.forward("mean", (x,))

    def mean_spatial(self, x):
        return self.forward("mean_spatial", (x,))

    def smooth_l1(self, pred, target):
        return self.forward("smooth_l1", (pred, target))

    def softmax_xent(self, logits, labels):
        return self.forward("softmax_xent", (logits,), labels=labels)
