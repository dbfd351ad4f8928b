"""Array kernels for the autodiff graph.

All image tensors are NCHW, row-major. Forward kernels return the output
array plus a context object that the matching backward kernel consumes.
Backward kernels return one gradient per differentiable input (None for
inputs that need no gradient).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Raised when an op receives incompatible extents."""

    def __init__(self, op: str, message: str):
        super().__init__(f"{op}: {message}")
        self.op = op


def _require(cond: bool, op: str, message: str):
    if not cond:
        raise ShapeError(op, message)


# ---------------------------------------------------------------------------
# convolution helpers

def conv_out_size(n: int, k: int, stride: int, padding: int, dilation: int) -> int:
    eff = dilation * (k - 1) + 1
    return (n + 2 * padding - eff) // stride + 1


def _im2col(x, kh, kw, stride, padding, dilation):
    """Unfold x (B,C,H,W) into patch columns (B, OH*OW, C*kh*kw)."""
    B, C, H, W = x.shape
    eff_h = dilation * (kh - 1) + 1
    eff_w = dilation * (kw - 1) + 1
    oh = (H + 2 * padding - eff_h) // stride + 1
    ow = (W + 2 * padding - eff_w) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    wins = sliding_window_view(xp, (eff_h, eff_w), axis=(2, 3))
    wins = wins[:, :, ::stride, ::stride, ::dilation, ::dilation]
    cols = wins.transpose(0, 2, 3, 1, 4, 5).reshape(B, oh * ow, C * kh * kw)
    return np.ascontiguousarray(cols), oh, ow


def _col_scatter_index(oh, ow, kh, kw, wp, stride, dilation):
    """Flat indices into the padded plane for every (position, tap) pair."""
    oy, ox = np.meshgrid(np.arange(oh), np.arange(ow), indexing="ij")
    ky, kx = np.meshgrid(np.arange(kh), np.arange(kw), indexing="ij")
    y = oy.reshape(-1, 1) * stride + ky.reshape(1, -1) * dilation
    x = ox.reshape(-1, 1) * stride + kx.reshape(1, -1) * dilation
    return (y * wp + x).reshape(-1)


def _conv_fwd(x, w, stride, padding, dilation):
    O, C, kh, kw = w.shape
    cols, oh, ow = _im2col(x, kh, kw, stride, padding, dilation)
    out = cols @ w.reshape(O, -1).T
    return out.transpose(0, 2, 1).reshape(x.shape[0], O, oh, ow), cols


def _conv_dw(cols, grad, ksize):
    """Weight gradient from cached columns and the output gradient."""
    O = grad.shape[1]
    g = grad.transpose(0, 2, 3, 1).reshape(grad.shape[0], -1, O)
    dwf = np.matmul(g.transpose(0, 2, 1), cols).sum(axis=0)
    return dwf.reshape((O,) + ksize)


def _conv_dx(grad, w, stride, padding, dilation, x_shape):
    """Input gradient: scatter grad @ w back through the unfolding."""
    B, C, H, W = x_shape
    O, _, kh, kw = w.shape
    _, _, oh, ow = grad.shape
    g = grad.transpose(0, 2, 3, 1).reshape(B, oh * ow, O)
    dcols = g @ w.reshape(O, -1)                      # (B, OH*OW, C*kh*kw)
    dcols = dcols.reshape(B, oh * ow, C, kh * kw).transpose(0, 2, 1, 3)
    hp, wp = H + 2 * padding, W + 2 * padding
    idx = _col_scatter_index(oh, ow, kh, kw, wp, stride, dilation)
    dxp = np.zeros((B, C, hp * wp), dtype=grad.dtype)
    np.add.at(
        dxp,
        (np.arange(B)[:, None, None], np.arange(C)[None, :, None], idx[None, None, :]),
        dcols.reshape(B, C, -1),
    )
    dxp = dxp.reshape(B, C, hp, wp)
    return dxp[:, :, padding:padding + H, padding:padding + W]


# ---------------------------------------------------------------------------
# op kernels: each pair is forward(inputs, params) -> (out, ctx) and
# backward(ctx, inputs, grad) -> [grad per input]

def conv2d_forward(inputs, params):
    x, w = inputs[0], inputs[1]
    stride = params.get("stride", 1)
    padding = params.get("padding", 0)
    dilation = params.get("dilation", 1)
    _require(x.ndim == 4, "conv2d", f"input must be NCHW, got ndim={x.ndim}")
    _require(w.ndim == 4, "conv2d", f"weight must be (O,C,kh,kw), got ndim={w.ndim}")
    _require(stride in (1, 2), "conv2d", f"stride must be 1 or 2, got {stride}")
    _require(dilation >= 1, "conv2d", f"dilation must be >= 1, got {dilation}")
    _require(
        x.shape[1] == w.shape[1],
        "conv2d",
        f"input channels {x.shape[1]} != weight channels {w.shape[1]}",
    )
    oh = conv_out_size(x.shape[2], w.shape[2], stride, padding, dilation)
    ow = conv_out_size(x.shape[3], w.shape[3], stride, padding, dilation)
    _require(oh >= 1 and ow >= 1, "conv2d",
             f"kernel {w.shape[2:]} does not fit input {x.shape[2:]} "
             f"with stride={stride} padding={padding} dilation={dilation}")
    out, cols = _conv_fwd(x, w, stride, padding, dilation)
    if len(inputs) == 3:
        b = inputs[2]
        _require(b.shape == (w.shape[0],), "conv2d",
                 f"bias shape {b.shape} != ({w.shape[0]},)")
        out = out + b[None, :, None, None]
    return out, {"cols": cols, "stride": stride, "padding": padding,
                 "dilation": dilation}


def conv2d_backward(ctx, inputs, grad):
    x, w = inputs[0], inputs[1]
    dx = _conv_dx(grad, w, ctx["stride"], ctx["padding"], ctx["dilation"], x.shape)
    dw = _conv_dw(ctx["cols"], grad, w.shape[1:])
    grads = [dx, dw]
    if len(inputs) == 3:
        grads.append(grad.sum(axis=(0, 2, 3)))
    return grads


def conv2d_transpose_forward(inputs, params):
    x, w = inputs[0], inputs[1]
    stride = params.get("stride", 2)
    padding = params.get("padding", 1)
    _require(x.ndim == 4 and w.ndim == 4, "conv2d_transpose",
             f"need NCHW input and (Cin,Cout,kh,kw) weight, got {x.ndim}/{w.ndim}")
    _require(stride == 2, "conv2d_transpose", f"stride must be 2, got {stride}")
    _require(x.shape[1] == w.shape[0], "conv2d_transpose",
             f"input channels {x.shape[1]} != weight in-channels {w.shape[0]}")
    kh, kw = w.shape[2], w.shape[3]
    oh = (x.shape[2] - 1) * stride - 2 * padding + kh
    ow = (x.shape[3] - 1) * stride - 2 * padding + kw
    _require(oh >= 1 and ow >= 1, "conv2d_transpose",
             f"output {oh}x{ow} invalid for input {x.shape[2:]} "
             f"stride={stride} padding={padding}")
    cout = w.shape[1]
    out = _conv_dx(x, w, stride, padding, 1, (x.shape[0], cout, oh, ow))
    if len(inputs) == 3:
        b = inputs[2]
        _require(b.shape == (cout,), "conv2d_transpose",
                 f"bias shape {b.shape} != ({cout},)")
        out = out + b[None, :, None, None]
    return out, {"stride": stride, "padding": padding}


def conv2d_transpose_backward(ctx, inputs, grad):
    x, w = inputs[0], inputs[1]
    stride, padding = ctx["stride"], ctx["padding"]
    dx, cols = _conv_fwd(grad, w, stride, padding, 1)
    dw = _conv_dw(cols, x, w.shape[1:])
    grads = [dx, dw]
    if len(inputs) == 3:
        grads.append(grad.sum(axis=(0, 2, 3)))
    return grads


def batch_norm_forward(inputs, params):
    x, gamma, beta = inputs
    eps = params.get("eps", 1e-5)
    training = params.get("training", True)
    momentum = params.get("momentum", 0.1)
    state = params.get("state")
    C = x.shape[1]
    _require(x.ndim == 4, "batch_norm", f"input must be NCHW, got ndim={x.ndim}")
    _require(gamma.shape == (C,) and beta.shape == (C,), "batch_norm",
             f"gamma/beta must be ({C},), got {gamma.shape}/{beta.shape}")
    if training:
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        if state is not None:
            state["mean"] *= 1.0 - momentum
            state["mean"] += momentum * mean
            state["var"] *= 1.0 - momentum
            state["var"] += momentum * var
    else:
        _require(state is not None, "batch_norm", "inference mode needs running stats")
        mean, var = state["mean"], state["var"]
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[None, :, None, None]) * inv[None, :, None, None]
    out = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    return out, {"xhat": xhat, "inv": inv, "training": training}


def batch_norm_backward(ctx, inputs, grad):
    x, gamma, _ = inputs
    xhat, inv = ctx["xhat"], ctx["inv"]
    dgamma = (grad * xhat).sum(axis=(0, 2, 3))
    dbeta = grad.sum(axis=(0, 2, 3))
    gscaled = grad * gamma[None, :, None, None]
    if not ctx["training"]:
        return [gscaled * inv[None, :, None, None], dgamma, dbeta]
    n = x.shape[0] * x.shape[2] * x.shape[3]
    sum_g = gscaled.sum(axis=(0, 2, 3), keepdims=True)
    sum_gx = (gscaled * xhat).sum(axis=(0, 2, 3), keepdims=True)
    dx = (gscaled - sum_g / n - xhat * sum_gx / n) * inv[None, :, None, None]
    return [dx, dgamma, dbeta]


def relu_forward(inputs, params):
    (x,) = inputs
    return np.maximum(x, 0), None


def relu_backward(ctx, inputs, grad):
    return [grad * (inputs[0] > 0)]


def tanh_forward(inputs, params):
    (x,) = inputs
    t = np.tanh(x)
    return t, {"t": t}


def tanh_backward(ctx, inputs, grad):
    t = ctx["t"]
    return [grad * (1.0 - t * t)]


def concat_forward(inputs, params):
    axis = params.get("axis", 1)
    base = list(inputs[0].shape)
    for a in inputs[1:]:
        other = list(a.shape)
        other[axis] = base[axis]
        _require(other == base, "concat",
                 f"non-concat extents differ: {inputs[0].shape} vs {a.shape}")
    return np.concatenate(inputs, axis=axis), {"axis": axis}


def concat_backward(ctx, inputs, grad):
    axis = ctx["axis"]
    sizes = [a.shape[axis] for a in inputs]
    splits = np.cumsum(sizes[:-1])
    return list(np.split(grad, splits, axis=axis))


def _bilinear_weights(n_in, n_out, dtype):
    # half-pixel-centre sampling; degenerates to copies when sizes match
    src = (np.arange(n_out, dtype=dtype) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    w1 = (src - i0).astype(dtype)
    return i0, i1, 1.0 - w1, w1


def upsample_bilinear_forward(inputs, params):
    (x,) = inputs
    oh, ow = params["out_h"], params["out_w"]
    _require(x.ndim == 4, "upsample_bilinear", f"input must be NCHW, got ndim={x.ndim}")
    _require(oh >= 1 and ow >= 1, "upsample_bilinear", f"bad target {oh}x{ow}")
    y0, y1, wy0, wy1 = _bilinear_weights(x.shape[2], oh, x.dtype)
    x0, x1, wx0, wx1 = _bilinear_weights(x.shape[3], ow, x.dtype)
    top = x[:, :, y0][:, :, :, x0] * (wy0[:, None] * wx0[None, :]) \
        + x[:, :, y0][:, :, :, x1] * (wy0[:, None] * wx1[None, :])
    bot = x[:, :, y1][:, :, :, x0] * (wy1[:, None] * wx0[None, :]) \
        + x[:, :, y1][:, :, :, x1] * (wy1[:, None] * wx1[None, :])
    return top + bot, {"y": (y0, y1, wy0, wy1), "x": (x0, x1, wx0, wx1)}


def upsample_bilinear_backward(ctx, inputs, grad):
    (x,) = inputs
    y0, y1, wy0, wy1 = ctx["y"]
    x0, x1, wx0, wx1 = ctx["x"]
    B, C, H, W = x.shape
    dx = np.zeros((B, C, H * W), dtype=grad.dtype)
    flat = grad.reshape(B, C, -1)
    for yi, wy in ((y0, wy0), (y1, wy1)):
        for xi, wx in ((x0, wx0), (x1, wx1)):
            idx = (yi[:, None] * W + xi[None, :]).reshape(-1)
            vals = flat * (wy[:, None] * wx[None, :]).reshape(-1)
            np.add.at(
                dx,
                (np.arange(B)[:, None, None], np.arange(C)[None, :, None],
                 idx[None, None, :]),
                vals,
            )
    return [dx.reshape(B, C, H, W)]


def _binary_check(op, a, b):
    _require(a.shape == b.shape, op, f"extents differ: {a.shape} vs {b.shape}")


def add_forward(inputs, params):
    _binary_check("add", *inputs)
    return inputs[0] + inputs[1], None


def add_backward(ctx, inputs, grad):
    return [grad, grad]


def sub_forward(inputs, params):
    _binary_check("sub", *inputs)
    return inputs[0] - inputs[1], None


def sub_backward(ctx, inputs, grad):
    return [grad, -grad]


def mul_forward(inputs, params):
    _binary_check("mul", *inputs)
    return inputs[0] * inputs[1], None


def mul_backward(ctx, inputs, grad):
    return [grad * inputs[1], grad * inputs[0]]


def scale_forward(inputs, params):
    c = params["c"]
    return inputs[0] * c, {"c": c}


def scale_backward(ctx, inputs, grad):
    return [grad * ctx["c"]]


def shift_forward(inputs, params):
    return inputs[0] + params["c"], None


def shift_backward(ctx, inputs, grad):
    return [grad]


def sum_forward(inputs, params):
    return np.asarray(inputs[0].sum(), dtype=inputs[0].dtype), None


def sum_backward(ctx, inputs, grad):
    return [np.broadcast_to(grad, inputs[0].shape).astype(grad.dtype)]


def mean_forward(inputs, params):
    return np.asarray(inputs[0].mean(), dtype=inputs[0].dtype), None


def mean_backward(ctx, inputs, grad):
    x = inputs[0]
    return [np.full(x.shape, grad / x.size, dtype=grad.dtype)]


def mean_spatial_forward(inputs, params):
    (x,) = inputs
    _require(x.ndim == 4, "mean_spatial", f"input must be NCHW, got ndim={x.ndim}")
    return x.mean(axis=(2, 3), keepdims=True), None


def mean_spatial_backward(ctx, inputs, grad):
    x = inputs[0]
    n = x.shape[2] * x.shape[3]
    return [np.broadcast_to(grad / n, x.shape).astype(grad.dtype)]


def smooth_l1_forward(inputs, params):
    pred, target = inputs
    _binary_check("smooth_l1", pred, target)
    d = pred - target
    a = np.abs(d)
    quad = a < 1.0
    vals = np.where(quad, 0.5 * d * d, a - 0.5)
    return np.asarray(vals.sum(), dtype=pred.dtype), {"d": d, "quad": quad}


def smooth_l1_backward(ctx, inputs, grad):
    d, quad = ctx["d"], ctx["quad"]
    g = np.where(quad, d, np.sign(d)) * grad
    return [g, -g]


def softmax_xent_forward(inputs, params):
    (logits,) = inputs
    labels = np.asarray(params["labels"], dtype=np.int64)
    z = logits.reshape(logits.shape[0], -1)
    _require(labels.shape == (z.shape[0],), "softmax_xent",
             f"labels shape {labels.shape} != ({z.shape[0]},)")
    _require(labels.min() >= 0 and labels.max() < z.shape[1], "softmax_xent",
             f"label out of range for {z.shape[1]} classes")
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    logp = (z - zmax) - np.log(ez.sum(axis=1, keepdims=True))
    loss = -logp[np.arange(z.shape[0]), labels].mean()
    return np.asarray(loss, dtype=logits.dtype), {"logp": logp, "labels": labels}


def softmax_xent_backward(ctx, inputs, grad):
    logits = inputs[0]
    logp, labels = ctx["logp"], ctx["labels"]
    p = np.exp(logp)
    p[np.arange(p.shape[0]), labels] -= 1.0
    return [(p * (grad / p.shape[0])).reshape(logits.shape)]


# name -> (forward, backward, n_inputs or None for variadic)
OP_CATALOG = {
    "conv2d": (conv2d_forward, conv2d_backward, None),
    "conv2d_transpose": (conv2d_transpose_forward, conv2d_transpose_backward, None),
    "batch_norm": (batch_norm_forward, batch_norm_backward, 3),
    "relu": (relu_forward, relu_backward, 1),
    "tanh": (tanh_forward, tanh_backward, 1),
    "concat": (concat_forward, concat_backward, None),
    "upsample_bilinear": (upsample_bilinear_forward, upsample_bilinear_backward, 1),
    "add": (add_forward, add_backward, 2),
    "sub": (sub_forward, sub_backward, 2),
    "mul": (mul_forward, mul_backward, 2),
    "scale": (scale_forward, scale_backward, 1),
    "shift": (shift_forward, shift_backward, 1),
    "sum": (sum_forward, sum_backward, 1),
    "mean": (mean_forward, mean_backward, 1),
    "mean_spatial": (mean_spatial_forward, mean_spatial_backward, 1),
    "smooth_l1": (smooth_l1_forward, smooth_l1_backward, 2),
    "softmax_xent": (softmax_xent_forward, softmax_xent_backward, 1),
}
