"""Hot numeric kernels for the dilated temporal convolution.

Two interchangeable backends:

* ``numba``: JIT-compiled explicit loops (default when numba imports).
* ``numpy``: vectorized fallback, always available.

Select with ``DISTILL_SEQ_BACKEND=numpy|numba``. Both backends produce
bitwise-identical results for the same inputs is NOT guaranteed (summation
order differs), so a single process must stick to one backend; the default
is resolved once at import time. ``benchmarks/bench_kernels.py`` compares
their throughput.
"""

import os

import numpy as np

from .errors import StructuralError

_BACKEND_ENV = "DISTILL_SEQ_BACKEND"


def _resolve_backend() -> str:
    choice = os.environ.get(_BACKEND_ENV, "").strip().lower()
    if choice == "numpy":
        return "numpy"
    if choice not in ("", "numba"):
        raise ValueError(f"unknown {_BACKEND_ENV}={choice!r} (expected 'numba' or 'numpy')")
    try:
        import numba  # noqa: F401
    except ImportError:
        if choice == "numba":
            raise
        return "numpy"
    return "numba"


BACKEND = _resolve_backend()


def _check_conv_args(x, w, dilation):
    if x.ndim != 2 or w.ndim != 3:
        raise StructuralError(f"conv1d expects 2-D input and 3-D kernel, got {x.ndim}-D / {w.ndim}-D")
    k = w.shape[0]
    if k % 2 != 1:
        raise StructuralError(f"kernel width must be odd, got {k}")
    if dilation < 1:
        raise StructuralError(f"dilation must be >= 1, got {dilation}")
    if w.shape[1] != x.shape[1]:
        raise StructuralError(
            f"kernel expects {w.shape[1]} input channels, input has {x.shape[1]}"
        )


# ---------------------------------------------------------------------------
# numpy backend


def conv1d_forward_numpy(x, w, dilation):
    """Same-length dilated 1-D convolution: out[t] = sum_o x[t + (o-k//2)*d] @ w[o]."""
    T = x.shape[0]
    k, _, cout = w.shape
    half = k // 2
    y = np.zeros((T, cout), dtype=np.float64)
    for o in range(k):
        off = (o - half) * dilation
        lo = max(0, -off)
        hi = min(T, T - off)
        if lo < hi:
            y[lo:hi] += x[lo + off:hi + off] @ w[o]
    return y


def conv1d_backward_numpy(x, w, dilation, gy):
    T = x.shape[0]
    k = w.shape[0]
    half = k // 2
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    for o in range(k):
        off = (o - half) * dilation
        lo = max(0, -off)
        hi = min(T, T - off)
        if lo < hi:
            gx[lo + off:hi + off] += gy[lo:hi] @ w[o].T
            gw[o] = x[lo + off:hi + off].T @ gy[lo:hi]
    return gx, gw


# ---------------------------------------------------------------------------
# numba backend

if BACKEND == "numba":
    from numba import njit

    @njit(cache=True)
    def _conv1d_forward_nb(x, w, dilation):  # pragma: no cover - jitted
        T, cin = x.shape
        k, _, cout = w.shape
        half = k // 2
        y = np.zeros((T, cout), dtype=np.float64)
        for t in range(T):
            for o in range(k):
                src = t + (o - half) * dilation
                if src < 0 or src >= T:
                    continue
                for ci in range(cin):
                    xv = x[src, ci]
                    for co in range(cout):
                        y[t, co] += xv * w[o, ci, co]
        return y

    @njit(cache=True)
    def _conv1d_backward_nb(x, w, dilation, gy):  # pragma: no cover - jitted
        T, cin = x.shape
        k, _, cout = w.shape
        half = k // 2
        gx = np.zeros_like(x)
        gw = np.zeros_like(w)
        for t in range(T):
            for o in range(k):
                src = t + (o - half) * dilation
                if src < 0 or src >= T:
                    continue
                for ci in range(cin):
                    acc = 0.0
                    for co in range(cout):
                        g = gy[t, co]
                        acc += g * w[o, ci, co]
                        gw[o, ci, co] += x[src, ci] * g
                    gx[src, ci] += acc
        return gx, gw


def conv1d_forward(x, w, dilation):
    """Dilated same-length convolution, backend-dispatched. x: (T, Cin), w: (k, Cin, Cout)."""
    _check_conv_args(x, w, dilation)
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if BACKEND == "numba":
        return _conv1d_forward_nb(x, w, dilation)
    return conv1d_forward_numpy(x, w, dilation)


def conv1d_backward(x, w, dilation, gy):
    """Gradients of conv1d_forward w.r.t. input and kernel."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    if BACKEND == "numba":
        return _conv1d_backward_nb(x, w, dilation, gy)
    return conv1d_backward_numpy(x, w, dilation, gy)
