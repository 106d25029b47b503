"""Reverse-mode differentiation over dense channel-major rasters.

Images are plain ``numpy`` arrays of shape ``(channels, height, width)``.
A :class:`Node` wraps such an array together with the rule that maps the
gradient of its output back onto its parents.  Calling :func:`backward` on
a scalar node propagates gradients through the graph and accumulates them
into the leaves that require them (typically :class:`Parameter` objects).
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

__all__ = [
    "ShapeError",
    "Node",
    "Parameter",
    "constant",
    "backward",
    "add",
    "sub",
    "mul",
    "scalar_mul",
    "concat_channels",
    "sum_all",
    "abs_sum",
    "square_sum",
    "conv2d",
    "bilinear_upsample2x",
    "bilinear_matrix",
    "spatial_linear",
    "channel_mix",
    "channel_scale",
    "leaky_relu",
    "sigmoid",
    "channel_norm",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Node:
    """A value in the differentiation graph.

    ``parents`` are the input nodes and ``rule`` maps the output gradient to
    a tuple of gradients, one per parent (``None`` for parents that need no
    gradient).
    """

    __slots__ = ("value", "parents", "rule", "op", "requires_grad", "grad", "name")

    def __init__(self, value, parents=(), rule=None, op="leaf", requires_grad=False, name=None):
        self.value = np.asarray(value)
        self.parents = tuple(parents)
        self.rule = rule
        self.op = op
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def is_leaf(self):
        return not self.parents

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<{type(self).__name__}{label} op={self.op} shape={self.shape}>"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Node):
            return mul(self, other)
        return scalar_mul(self, other)

    __rmul__ = __mul__


class Parameter(Node):
    """Trainable leaf carrying Adam moment estimates."""

    __slots__ = ("m", "v", "step")

    def __init__(self, value, name=None):
        super().__init__(np.array(value, copy=True), requires_grad=True, name=name)
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)
        self.step = 0


def constant(x):
    """Wrap ``x`` in a non-trainable leaf (no-op for nodes)."""
    if isinstance(x, Node):
        return x
    return Node(x)


def _check_same(a, b, op):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def backward(loss):
    """Accumulate d(loss)/d(leaf) into every reachable leaf requiring grad.

    Leaves that are not reachable keep their current gradient.  Repeated
    calls without zeroing accumulate.
    """
    if loss.value.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))

    grads = {id(loss): np.ones_like(loss.value)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            if node.requires_grad:
                if node.grad is None:
                    node.grad = np.zeros_like(node.value)
                node.grad += g
            continue
        for parent, pg in zip(node.parents, node.rule(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


# --- elementwise and reductions -------------------------------------------

def add(a, b):
    a, b = constant(a), constant(b)
    _check_same(a, b, "add")
    return Node(a.value + b.value, (a, b), lambda g: (g, g), "add")


def sub(a, b):
    a, b = constant(a), constant(b)
    _check_same(a, b, "sub")
    return Node(a.value - b.value, (a, b), lambda g: (g, -g), "sub")


def mul(a, b):
    """Hadamard product."""
    a, b = constant(a), constant(b)
    _check_same(a, b, "mul")
    av, bv = a.value, b.value
    return Node(av * bv, (a, b), lambda g: (g * bv, g * av), "mul")


def scalar_mul(a, s):
    a = constant(a)
    s = float(s)
    return Node(a.value * s, (a,), lambda g: (g * s,), "scalar_mul")


def concat_channels(nodes):
    nodes = [constant(n) for n in nodes]
    spatial = {n.shape[1:] for n in nodes}
    if len(spatial) != 1:
        raise ShapeError(f"concat_channels: spatial shapes differ {[n.shape for n in nodes]}")
    splits = np.cumsum([n.shape[0] for n in nodes])[:-1]
    out = np.concatenate([n.value for n in nodes], axis=0)
    return Node(out, nodes, lambda g: tuple(np.split(g, splits, axis=0)), "concat")


def _scalar(v, like):
    return np.full((1, 1, 1), v, dtype=like.dtype)


def sum_all(a):
    a = constant(a)
    shape = a.shape
    return Node(_scalar(a.value.sum(), a.value), (a,),
                lambda g: (np.broadcast_to(g.reshape(()), shape).copy(),), "sum")


def abs_sum(a):
    """Sum of absolute values; the subgradient at zero is zero."""
    a = constant(a)
    sign = np.sign(a.value)
    return Node(_scalar(np.abs(a.value).sum(), a.value), (a,),
                lambda g: (g.reshape(()) * sign,), "abs_sum")


def square_sum(a):
    """Squared Frobenius norm."""
    a = constant(a)
    av = a.value
    return Node(_scalar(np.square(av).sum(), av), (a,),
                lambda g: (2.0 * g.reshape(()) * av,), "square_sum")


# --- convolution -----------------------------------------------------------

def conv2d(x, weight, bias=None, stride=1):
    """2-D cross-correlation with zero 'same' padding (``k // 2``).

    ``x`` is ``C x H x W``, ``weight`` is ``O x C x k x k`` and ``bias`` has
    length ``O``.  With ``stride=2`` the output is ``O x ceil(H/2) x ceil(W/2)``.
    """
    x, weight = constant(x), constant(weight)
    xv, wv = x.value, weight.value
    if xv.ndim != 3 or wv.ndim != 4:
        raise ShapeError(f"conv2d: expected 3-D input and 4-D weight, got {xv.shape} and {wv.shape}")
    out_c, in_c, k, k2 = wv.shape
    if k != k2 or k not in (1, 3):
        raise ShapeError(f"conv2d: kernel must be 1x1 or 3x3, got {wv.shape}")
    if in_c != xv.shape[0]:
        raise ShapeError(f"conv2d: weight {wv.shape} does not match input {xv.shape}")
    if bias is not None:
        bias = constant(bias)
        if bias.shape != (out_c,):
            raise ShapeError(f"conv2d: bias {bias.shape} does not match weight {wv.shape}")
    _, h, w = xv.shape
    pad = k // 2
    if k == 1:
        xs = xv[:, ::stride, ::stride]
        ho, wo = xs.shape[1:]
        cols = xs.reshape(in_c, ho * wo)
    else:
        xp = np.pad(xv, ((0, 0), (pad, pad), (pad, pad)))
        win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
        ho, wo = win.shape[1:3]
        cols = win.transpose(0, 3, 4, 1, 2).reshape(in_c * k * k, ho * wo)
    w2 = wv.reshape(out_c, -1)
    out = w2 @ cols
    if bias is not None:
        out += bias.value[:, None]
    out = out.reshape(out_c, ho, wo)

    def rule(g):
        g2 = g.reshape(out_c, ho * wo)
        gw = (g2 @ cols.T).reshape(wv.shape) if weight.requires_grad else None
        gb = g2.sum(axis=1) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = w2.T @ g2
            if k == 1:
                gx = np.zeros_like(xv)
                gx[:, ::stride, ::stride] = gcols.reshape(in_c, ho, wo)
            else:
                gcols = gcols.reshape(in_c, k, k, ho, wo)
                gxp = np.zeros((in_c, h + 2 * pad, w + 2 * pad), dtype=xv.dtype)
                for i in range(k):
                    for j in range(k):
                        gxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride] += gcols[:, i, j]
                gx = gxp[:, pad:pad + h, pad:pad + w]
        return (gx, gw) if bias is None else (gx, gw, gb)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Node(out, parents, rule, f"conv{k}x{k}")


# --- separable spatial linear maps ----------------------------------------

def spatial_linear(x, rows, cols):
    """Apply ``out[c] = rows @ x[c] @ cols.T`` to every channel.

    Resampling operators (upsampling, block averaging, bicubic and Gaussian
    decimation, finite differences) are all separable and reduce to this.
    """
    x = constant(x)
    xv = x.value
    if xv.ndim != 3 or rows.shape[1] != xv.shape[1] or cols.shape[1] != xv.shape[2]:
        raise ShapeError(
            f"spatial_linear: operators {rows.shape}/{cols.shape} do not fit input {xv.shape}")
    rows = rows.astype(xv.dtype, copy=False)
    cols = cols.astype(xv.dtype, copy=False)
    out = np.matmul(np.matmul(rows, xv), cols.T)
    return Node(out, (x,), lambda g: (np.matmul(np.matmul(rows.T, g), cols),), "spatial_linear")


def bilinear_matrix(n):
    """``2n x n`` interpolation matrix, half-pixel (align-corners false) grid."""
    m = np.zeros((2 * n, n))
    for o in range(2 * n):
        src = max((o + 0.5) / 2.0 - 0.5, 0.0)
        i0 = int(np.floor(src))
        frac = src - i0
        i1 = min(i0 + 1, n - 1)
        m[o, i0] += 1.0 - frac
        m[o, i1] += frac
    return m


_BILINEAR_CACHE = {}


def bilinear_upsample2x(x):
    x = constant(x)
    if x.value.ndim != 3 or min(x.shape[1:]) < 1:
        raise ShapeError(f"bilinear_upsample2x: bad input shape {x.shape}")
    mats = []
    for n in x.shape[1:]:
        if n not in _BILINEAR_CACHE:
            _BILINEAR_CACHE[n] = bilinear_matrix(n)
        mats.append(_BILINEAR_CACHE[n])
    out = spatial_linear(x, mats[0], mats[1])
    out.op = "upsample2x"
    return out


def channel_mix(x, matrix):
    """Per-pixel matrix-vector product with a constant ``c_out x c_in`` matrix."""
    x = constant(x)
    matrix = np.asarray(matrix, dtype=x.value.dtype)
    if matrix.ndim != 2 or matrix.shape[1] != x.shape[0]:
        raise ShapeError(f"channel_mix: matrix {matrix.shape} does not fit input {x.shape}")
    c, h, w = x.shape
    out = (matrix @ x.value.reshape(c, h * w)).reshape(matrix.shape[0], h, w)
    return Node(out, (x,),
                lambda g: ((matrix.T @ g.reshape(matrix.shape[0], h * w)).reshape(c, h, w),),
                "channel_mix")


def channel_scale(x, weights):
    """Multiply channel ``i`` of ``x`` by ``weights[i]``."""
    x, weights = constant(x), constant(weights)
    if weights.shape != (x.shape[0],):
        raise ShapeError(f"channel_scale: weights {weights.shape} do not fit input {x.shape}")
    xv, wv = x.value, weights.value

    def rule(g):
        return g * wv[:, None, None], np.einsum("chw,chw->c", g, xv)

    return Node(xv * wv[:, None, None], (x, weights), rule, "channel_scale")


# --- activations and normalisation ----------------------------------------

def leaky_relu(x, slope=0.1):
    x = constant(x)
    scale = np.where(x.value >= 0, x.value.dtype.type(1.0), x.value.dtype.type(slope))
    return Node(x.value * scale, (x,), lambda g: (g * scale,), "leaky_relu")


def sigmoid(x):
    x = constant(x)
    s = expit(x.value)
    return Node(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def channel_norm(x, gain, shift, eps=1e-6):
    """Standardise every channel over its spatial extent, then scale and shift.

    Uses the population variance.  ``gain`` and ``shift`` have one entry per
    channel.
    """
    x, gain, shift = constant(x), constant(gain), constant(shift)
    c, h, w = x.shape
    n = h * w
    if n < 2:
        raise ShapeError(f"channel_norm: spatial extent {h}x{w} is degenerate")
    if gain.shape != (c,) or shift.shape != (c,):
        raise ShapeError(f"channel_norm: gain/shift {gain.shape}/{shift.shape} vs input {x.shape}")
    flat = x.value.reshape(c, n)
    centered = flat - flat.mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=1, keepdims=True) + eps)
    xhat = centered * inv_std
    gv = gain.value[:, None]
    out = (xhat * gv + shift.value[:, None]).reshape(c, h, w)

    def rule(g):
        g2 = g.reshape(c, n)
        ggain = (g2 * xhat).sum(axis=1)
        gshift = g2.sum(axis=1)
        dxhat = g2 * gv
        gx = inv_std / n * (n * dxhat - dxhat.sum(axis=1, keepdims=True)
                            - xhat * (dxhat * xhat).sum(axis=1, keepdims=True))
        return gx.reshape(c, h, w), ggain, gshift

    return Node(out, (x, gain, shift), rule, "channel_norm")
