"""Reverse-mode differentiation over a closed operator set.

A Var wraps a numpy array and remembers how it was produced. Calling
`differentiate(loss, params)` walks the tape backwards and returns
d loss / d p for each parameter. Only the operators the encoder and the
contrastive loss need are provided; anything else in a graph raises
UnsupportedOperator.

Storage follows the input dtype (float32 in production, float64 in
gradient-check tests); reductions accumulate in float64 either way.
Set HSVLM_DEBUG=1 to assert finiteness after every operation.
"""

import os

import numpy as np

from . import backend
from .errors import IndexOutOfRange, NearZeroNorm, ShapeMismatch, UnsupportedOperator

EPS_NORM = 1e-12
_DEBUG = os.environ.get("HSVLM_DEBUG", "0") == "1"

ALLOWED_OPS = frozenset({
    "leaf", "add", "mul", "scale", "exp", "matmul", "reshape", "transpose",
    "concat", "slice_last", "gather_axis1", "gather_cols", "layernorm",
    "gelu", "softmax", "l2norm_rows", "sum", "mean", "softmax_ce",
})


class Var:
    __slots__ = ("value", "grad", "parents", "vjps", "op")

    def __init__(self, value, parents=(), vjps=(), op="leaf"):
        self.value = np.asarray(value)
        self.grad = None
        self.parents = tuple(parents)
        self.vjps = tuple(vjps)
        self.op = op
        if _DEBUG and not np.all(np.isfinite(self.value)):
            raise FloatingPointError(f"non-finite values out of op {op!r}")

    @property
    def shape(self):
        return self.value.shape


def _unbroadcast(grad, shape):
    """Sum grad down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def constant(value, dtype=np.float32):
    return Var(np.asarray(value, dtype=dtype))


def add(a: Var, b: Var) -> Var:
    out = a.value + b.value
    return Var(out, (a, b),
               (lambda g: _unbroadcast(g, a.value.shape),
                lambda g: _unbroadcast(g, b.value.shape)), "add")


def mul(a: Var, b: Var) -> Var:
    out = a.value * b.value
    return Var(out, (a, b),
               (lambda g: _unbroadcast(g * b.value, a.value.shape),
                lambda g: _unbroadcast(g * a.value, b.value.shape)), "mul")


def scale(a: Var, c: float) -> Var:
    c = float(c)
    return Var(a.value * c, (a,), (lambda g: g * c,), "scale")


def exp(a: Var) -> Var:
    out = np.exp(a.value)
    return Var(out, (a,), (lambda g: g * out,), "exp")


def matmul(a: Var, b: Var) -> Var:
    if a.value.shape[-1] != b.value.shape[-2]:
        raise ShapeMismatch(f"matmul {a.value.shape} x {b.value.shape}")
    dt = np.result_type(a.value.dtype, b.value.dtype)
    out = np.matmul(a.value.astype(np.float64), b.value.astype(np.float64)).astype(dt)

    def ga(g):
        g64 = g.astype(np.float64)
        r = np.matmul(g64, np.swapaxes(b.value.astype(np.float64), -1, -2))
        return _unbroadcast(r, a.value.shape).astype(a.value.dtype)

    def gb(g):
        g64 = g.astype(np.float64)
        r = np.matmul(np.swapaxes(a.value.astype(np.float64), -1, -2), g64)
        return _unbroadcast(r, b.value.shape).astype(b.value.dtype)

    return Var(out, (a, b), (ga, gb), "matmul")


def reshape(a: Var, shape) -> Var:
    shape = tuple(shape)
    return Var(a.value.reshape(shape), (a,),
               (lambda g: g.reshape(a.value.shape),), "reshape")


def transpose(a: Var, axes) -> Var:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return Var(a.value.transpose(axes), (a,),
               (lambda g: g.transpose(inv),), "transpose")


def concat(vars_, axis: int) -> Var:
    vals = [v.value for v in vars_]
    out = np.concatenate(vals, axis=axis)
    sizes = [v.shape[axis] for v in vals]
    offsets = np.cumsum([0] + sizes)

    def make_vjp(i):
        sl = [slice(None)] * out.ndim
        sl[axis] = slice(offsets[i], offsets[i + 1])
        sl = tuple(sl)
        return lambda g: g[sl]

    return Var(out, tuple(vars_), tuple(make_vjp(i) for i in range(len(vals))), "concat")


def slice_last(a: Var, start: int, stop: int) -> Var:
    sl = (Ellipsis, slice(start, stop))

    def vjp(g):
        full = np.zeros_like(a.value)
        full[sl] = g
        return full

    return Var(a.value[sl], (a,), (vjp,), "slice_last")


def gather_axis1(a: Var, idx) -> Var:
    """Select indices along axis 1 (token axis), same indices per row."""
    idx = np.asarray(idx, dtype=np.int64)
    out = a.value[:, idx]

    def vjp(g):
        full = np.zeros_like(a.value)
        np.add.at(full, (slice(None), idx), g)
        return full

    return Var(out, (a,), (vjp,), "gather_axis1")


def gather_cols(a: Var, idx) -> Var:
    """Per-row column gather: out[i, l] = a[i, idx[i, l]]."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.ndim != 2 or a.value.ndim != 2 or idx.shape[0] != a.value.shape[0]:
        raise ShapeMismatch(f"gather_cols a {a.value.shape}, idx {idx.shape}")
    out = np.take_along_axis(a.value, idx, axis=1)
    rows = np.arange(a.value.shape[0])[:, None]

    def vjp(g):
        full = np.zeros_like(a.value)
        np.add.at(full, (rows, idx), g)
        return full

    return Var(out, (a,), (vjp,), "gather_cols")


def layernorm(x: Var, gamma: Var, beta: Var, eps: float = 1e-5) -> Var:
    orig = x.value.shape
    cols = orig[-1]
    x2 = np.ascontiguousarray(x.value.reshape(-1, cols))
    y2, mu, rstd = backend.layernorm_fwd(x2, gamma.value, beta.value, eps)

    def gx(g):
        g2 = np.ascontiguousarray(g.reshape(-1, cols))
        dx, _, _ = backend.layernorm_bwd(x2, gamma.value, mu, rstd, g2)
        return dx.reshape(orig)

    def ggamma(g):
        g2 = np.ascontiguousarray(g.reshape(-1, cols))
        _, dg, _ = backend.layernorm_bwd(x2, gamma.value, mu, rstd, g2)
        return dg

    def gbeta(g):
        g2 = np.ascontiguousarray(g.reshape(-1, cols))
        _, _, db = backend.layernorm_bwd(x2, gamma.value, mu, rstd, g2)
        return db

    return Var(y2.reshape(orig), (x, gamma, beta), (gx, ggamma, gbeta), "layernorm")


def gelu(x: Var) -> Var:
    xc = np.ascontiguousarray(x.value)
    out = backend.gelu_fwd(xc)
    return Var(out, (x,),
               (lambda g: backend.gelu_bwd(xc, np.ascontiguousarray(g)),), "gelu")


def softmax(x: Var) -> Var:
    """Softmax over the last axis, max-shifted, float64 accumulation."""
    orig = x.value.shape
    x2 = np.ascontiguousarray(x.value.reshape(-1, orig[-1]))
    y2 = backend.softmax_rows(x2)
    out = y2.reshape(orig)

    def vjp(g):
        g2 = g.reshape(-1, orig[-1]).astype(np.float64)
        y64 = y2.astype(np.float64)
        inner = (g2 * y64).sum(axis=1, keepdims=True)
        return (y64 * (g2 - inner)).reshape(orig).astype(x.value.dtype)

    return Var(out, (x,), (vjp,), "softmax")


def l2norm_rows(x: Var) -> Var:
    x64 = x.value.astype(np.float64)
    norms = np.sqrt((x64 * x64).sum(axis=-1, keepdims=True))
    if np.any(norms <= EPS_NORM):
        raise NearZeroNorm("row norm below 1e-12 in l2norm_rows")
    y64 = x64 / norms

    def vjp(g):
        g64 = g.astype(np.float64)
        inner = (g64 * y64).sum(axis=-1, keepdims=True)
        return ((g64 - y64 * inner) / norms).astype(x.value.dtype)

    return Var(y64.astype(x.value.dtype), (x,), (vjp,), "l2norm_rows")


def sum_all(x: Var) -> Var:
    out = np.asarray(x.value.astype(np.float64).sum(), dtype=x.value.dtype)
    return Var(out, (x,),
               (lambda g: np.broadcast_to(g, x.value.shape).astype(x.value.dtype),),
               "sum")


def mean_all(x: Var) -> Var:
    n = x.value.size
    out = np.asarray(x.value.astype(np.float64).sum() / n, dtype=x.value.dtype)
    return Var(out, (x,),
               (lambda g: (np.broadcast_to(g, x.value.shape) / n).astype(x.value.dtype),),
               "mean")


def softmax_ce_rows(logits: Var, targets) -> Var:
    """Per-row cross-entropy; returns a length-N Var of losses."""
    targets = np.asarray(targets, dtype=np.int64)
    n, k = logits.value.shape
    if np.any(targets < 0) or np.any(targets >= k):
        raise IndexOutOfRange(f"target outside [0, {k})")
    x64 = logits.value.astype(np.float64)
    m = x64.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(x64 - m).sum(axis=1))
    losses = lse - x64[np.arange(n), targets]
    sm = np.exp(x64 - lse[:, None])

    def vjp(g):
        grad = sm.copy()
        grad[np.arange(n), targets] -= 1.0
        return (grad * g[:, None]).astype(logits.value.dtype)

    return Var(losses.astype(logits.value.dtype), (logits,), (vjp,), "softmax_ce")


def _toposort(root: Var):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))
    return order


def backward(loss: Var):
    if loss.value.size != 1:
        raise ShapeMismatch("backward requires a scalar loss")
    order = _toposort(loss)
    for node in order:
        if node.op not in ALLOWED_OPS:
            raise UnsupportedOperator(f"operator {node.op!r} outside the fixed set")
        node.grad = None
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node.grad is None:
            continue
        for parent, vjp in zip(node.parents, node.vjps):
            contrib = vjp(node.grad)
            if parent.grad is None:
                parent.grad = contrib
            else:
                parent.grad = parent.grad + contrib


def differentiate(loss: Var, params) -> list:
    """Gradient of a scalar graph w.r.t. each leaf parameter Var."""
    backward(loss)
    return [p.grad if p.grad is not None else np.zeros_like(p.value) for p in params]
