"""Reverse-mode differentiation over float64 numpy arrays.

A ``Var`` wraps an ndarray value and remembers how it was produced; calling
``backward`` on a scalar root fills ``grad`` on every node with the exact
partial derivative of the root. Graphs are built eagerly and are meant to be
used for a single forward/backward pass on one thread; the array values
themselves are treated as immutable.
"""

import numpy as np

from . import kernels
from .errors import DegenerateInputError, NumericalError, StructuralError

__all__ = [
    "Var", "constant", "add", "sub", "mul", "div", "neg", "scale", "add_const",
    "relu", "sigmoid", "exp", "log", "sqrt", "absolute", "softplus",
    "logaddexp_const", "clip_min", "reduce_sum", "reduce_mean", "matmul",
    "transpose", "rows", "take_flat", "dilated_conv1d", "apply_elementwise",
    "reduce", "backward", "finite_diff_check",
]


class Var:
    """One node of the differentiation graph."""

    __slots__ = ("value", "grad", "parents", "_vjp")

    def __init__(self, value, parents=(), vjp=None):
        value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise NumericalError("non-finite value entering the graph")
        self.value = value
        self.grad = None
        self.parents = parents
        self._vjp = vjp  # grad_out -> tuple of parent grads, None for leaves

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape})"

    # Operator sugar; other operand may be a Var, ndarray or scalar.
    def __add__(self, other):
        return add(self, _lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __neg__(self):
        return neg(self)


def _lift(x):
    return x if isinstance(x, Var) else constant(x)


def constant(value):
    """A leaf that participates in the forward pass but is never a gradient target."""
    return Var(value)


def _unbroadcast(grad, shape):
    """Reduce a broadcast gradient back to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _binary(a, b, value, da, db):
    def vjp(g):
        return _unbroadcast(da(g), a.shape), _unbroadcast(db(g), b.shape)

    return Var(value, (a, b), vjp)


def add(a, b):
    return _binary(a, b, a.value + b.value, lambda g: g, lambda g: g)


def sub(a, b):
    return _binary(a, b, a.value - b.value, lambda g: g, lambda g: -g)


def mul(a, b):
    av, bv = a.value, b.value
    return _binary(a, b, av * bv, lambda g: g * bv, lambda g: g * av)


def div(a, b):
    av, bv = a.value, b.value
    return _binary(a, b, av / bv, lambda g: g / bv, lambda g: -g * av / (bv * bv))


def neg(a):
    return Var(-a.value, (a,), lambda g: (-g,))


def scale(a, c):
    c = float(c)
    if not np.isfinite(c):
        raise NumericalError("scale factor must be finite")
    return Var(a.value * c, (a,), lambda g: (g * c,))


def add_const(a, c):
    c = float(c)
    if not np.isfinite(c):
        raise NumericalError("added constant must be finite")
    return Var(a.value + c, (a,), lambda g: (g,))


def relu(a):
    mask = a.value > 0.0
    return Var(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a):
    v = _sigmoid_np(a.value)
    return Var(v, (a,), lambda g: (g * v * (1.0 - v),))


def _sigmoid_np(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def exp(a):
    v = np.exp(a.value)
    if not np.all(np.isfinite(v)):
        raise NumericalError("exp overflow")
    return Var(v, (a,), lambda g: (g * v,))


def log(a):
    if np.any(a.value <= 0.0):
        raise NumericalError("log of non-positive value")
    av = a.value
    return Var(np.log(av), (a,), lambda g: (g / av,))


def sqrt(a):
    if np.any(a.value < 0.0):
        raise NumericalError("sqrt of negative value")
    v = np.sqrt(a.value)
    return Var(v, (a,), lambda g: (g / (2.0 * v),))


def absolute(a):
    s = np.sign(a.value)  # subgradient 0 at exactly 0
    return Var(np.abs(a.value), (a,), lambda g: (g * s,))


def softplus(a):
    """log(1 + e^x), stable for large |x|; gradient is sigmoid(x)."""
    av = a.value
    return Var(np.logaddexp(0.0, av), (a,), lambda g: (g * _sigmoid_np(av),))


def logaddexp_const(a, c):
    """log(e^x + e^c) for scalar constant c; used for log(e^x + phi) with c = log(phi)."""
    c = float(c)
    v = np.logaddexp(a.value, c)
    w = np.exp(a.value - v)  # e^x / (e^x + e^c)
    return Var(v, (a,), lambda g: (g * w,))


def clip_min(a, c):
    """max(x, c); gradient passes only where x > c (guards divisions by tiny norms)."""
    c = float(c)
    mask = a.value > c
    return Var(np.where(mask, a.value, c), (a,), lambda g: (g * mask,))


def reduce_sum(a, axis=None, keepdims=False):
    v = a.value.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).copy(),)

    return Var(v, (a,), vjp)


def reduce_mean(a, axis=None, keepdims=False):
    if axis is None:
        n = a.value.size
    else:
        n = a.shape[axis]
    if n == 0:
        raise DegenerateInputError("mean over a zero-extent axis")
    return scale(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def matmul(a, b):
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim != 2:
        raise StructuralError("matmul expects 2-D operands")
    if av.shape[1] != bv.shape[0]:
        raise StructuralError(f"matmul shape mismatch {av.shape} x {bv.shape}")

    def vjp(g):
        return g @ bv.T, av.T @ g

    return Var(av @ bv, (a, b), vjp)


def transpose(a):
    if a.value.ndim != 2:
        raise StructuralError("transpose expects a 2-D operand")
    return Var(a.value.T.copy(), (a,), lambda g: (g.T.copy(),))


def rows(a, start, stop):
    """Row slice a[start:stop] of a 2-D (or 1-D) array."""
    v = a.value[start:stop]

    def vjp(g):
        out = np.zeros_like(a.value)
        out[start:stop] = g
        return (out,)

    return Var(v.copy(), (a,), vjp)


def take_flat(a, flat_indices):
    """Gather entries of the flattened array (used by the covariance mask)."""
    idx = np.asarray(flat_indices, dtype=np.intp)
    v = a.value.ravel()[idx]

    def vjp(g):
        out = np.zeros(a.value.size, dtype=np.float64)
        np.add.at(out, idx, g)
        return (out.reshape(a.shape),)

    return Var(v, (a,), vjp)


def dilated_conv1d(x, w, dilation):
    """Same-length dilated temporal convolution; differentiable in input and kernel.

    x: (T, Cin) Var, w: (k, Cin, Cout) Var with odd k; zero padding of
    (k-1)*dilation/2 on each side.
    """
    x, w = _lift(x), _lift(w)
    v = kernels.conv1d_forward(x.value, w.value, dilation)

    def vjp(g):
        return kernels.conv1d_backward(x.value, w.value, dilation, g)

    return Var(v, (x, w), vjp)


def apply_elementwise(a, fn, param=None):
    """Named elementwise op: 'relu', 'sigmoid', 'add-constant' or 'scale'."""
    a = _lift(a)
    if fn == "relu":
        return relu(a)
    if fn == "sigmoid":
        return sigmoid(a)
    if fn == "add-constant":
        return add_const(a, param)
    if fn == "scale":
        return scale(a, param)
    raise StructuralError(f"unknown elementwise fn {fn!r}")


def reduce(a, axis=None, kind="sum"):
    """Named reduction over one axis or all entries."""
    a = _lift(a)
    if axis is not None and not (-a.value.ndim <= axis < a.value.ndim):
        raise StructuralError(f"axis {axis} invalid for shape {a.shape}")
    if kind == "sum":
        return reduce_sum(a, axis=axis)
    if kind == "mean":
        return reduce_mean(a, axis=axis)
    raise StructuralError(f"unknown reduction kind {kind!r}")


def _toposort(root):
    order, seen = [], set()
    stack = [(root, False)]
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


def backward(root):
    """Fill ``grad`` on every node reachable from the scalar ``root``."""
    if root.value.size != 1:
        raise StructuralError(f"backward root must be scalar, got shape {root.shape}")
    order = _toposort(root)
    for node in order:
        node.grad = np.zeros_like(node.value)
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node._vjp is None:
            continue
        grads = node._vjp(node.grad)
        for parent, g in zip(node.parents, grads):
            parent.grad = parent.grad + g


def value_of(x):
    """Plain ndarray view of a Var or array (detach point for frozen inputs)."""
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def finite_diff_check(f, x, h=1e-5):
    """Max relative error between analytic and central-difference gradients.

    ``f`` maps a Var (leaf wrapping an array like ``x``) to a scalar Var.
    Relative error per coordinate is |analytic - numeric| / max(1, |analytic|).
    """
    x = np.asarray(x, dtype=np.float64)
    leaf = Var(x)
    out = f(leaf)
    if not np.isfinite(out.value):
        raise NumericalError("objective returned a non-finite value")
    backward(out)
    analytic = leaf.grad.ravel()

    numeric = np.empty(x.size, dtype=np.float64)
    flat = x.ravel()
    for i in range(x.size):
        bump = flat.copy()
        bump[i] += h
        fp = float(f(Var(bump.reshape(x.shape))).value)
        bump[i] -= 2.0 * h
        fm = float(f(Var(bump.reshape(x.shape))).value)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericalError("objective returned a non-finite value during probing")
        numeric[i] = (fp - fm) / (2.0 * h)

    denom = np.maximum(1.0, np.abs(analytic))
    return float(np.max(np.abs(analytic - numeric) / denom))
