"""Batched 2x2 matrix kernels with backend selection.

Exposes mul/dagger/tilde/star/hat/comm/det/trace/sandwich on complex
(..., 2, 2) arrays.  At import time the compiled Cython backend is chosen when
available; set MATLAT_BACKEND=python or MATLAT_BACKEND=cython to force one.
The compiled path handles same-shape and constant-operand products; anything
else falls through to the NumPy implementation, so broadcasting semantics are
identical across backends.
"""

import os

import numpy as np

from . import _kernels_py as _py

_requested = os.environ.get("MATLAT_BACKEND", "").strip().lower()
if _requested not in ("", "python", "cython"):
    raise ValueError(f"MATLAT_BACKEND must be 'python' or 'cython', got {_requested!r}")

_cy = None
if _requested != "python":
    try:
        from . import _kernels_cy as _cy
    except ImportError:
        if _requested == "cython":
            raise
        _cy = None

BACKEND = "cython" if _cy is not None else "python"

__all__ = [
    "BACKEND",
    "mul",
    "dagger",
    "tilde",
    "star",
    "hat",
    "comm",
    "det",
    "trace",
    "sandwich",
]


def _as_batch(a):
    a = np.ascontiguousarray(a, dtype=np.complex128)
    return a.reshape(-1, 2, 2), a.shape


def _unary(cy_fun, py_fun, a):
    if _cy is None:
        return py_fun(a)
    flat, shape = _as_batch(a)
    out = np.empty_like(flat)
    cy_fun(flat, out)
    return out.reshape(shape)


def mul(a, b):
    """Matrix product a @ b, broadcasting over leading axes."""
    if _cy is None:
        return _py.mul(a, b)
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape == b.shape:
        fa, shape = _as_batch(a)
        fb, _ = _as_batch(b)
        out = np.empty_like(fa)
        _cy.mul_nn(fa, fb, out)
        return out.reshape(shape)
    if a.shape == (2, 2):
        fb, shape = _as_batch(b)
        out = np.empty_like(fb)
        _cy.mul_cn(np.ascontiguousarray(a, dtype=np.complex128), fb, out)
        return out.reshape(shape)
    if b.shape == (2, 2):
        fa, shape = _as_batch(a)
        out = np.empty_like(fa)
        _cy.mul_nc(fa, np.ascontiguousarray(b, dtype=np.complex128), out)
        return out.reshape(shape)
    return _py.mul(a, b)


def dagger(a):
    """Hermitian conjugate."""
    return _unary(_cy.dagger_n if _cy else None, _py.dagger, a)


def tilde(a):
    """(tr a)e - a."""
    return _unary(_cy.tilde_n if _cy else None, _py.tilde, a)


def star(a):
    """tilde then dagger (the two commute)."""
    return _unary(_cy.star_n if _cy else None, _py.star, a)


def hat(a):
    """(det a/|det a|) star(a); NaN where det a = 0 (callers guard)."""
    return _unary(_cy.hat_n if _cy else None, _py.hat, a)


def comm(a, b):
    """Commutator ab - ba."""
    if _cy is None or np.asarray(a).shape != np.asarray(b).shape:
        return _py.comm(a, b)
    fa, shape = _as_batch(a)
    fb, _ = _as_batch(b)
    out = np.empty_like(fa)
    _cy.comm_nn(fa, fb, out)
    return out.reshape(shape)


def det(a):
    """Determinant over the trailing 2x2 block."""
    if _cy is None:
        return _py.det(a)
    flat, shape = _as_batch(a)
    out = np.empty(flat.shape[0], dtype=np.complex128)
    _cy.det_n(flat, out)
    return out.reshape(shape[:-2])


def trace(a):
    """Trace over the trailing 2x2 block."""
    if _cy is None:
        return _py.trace(a)
    flat, shape = _as_batch(a)
    out = np.empty(flat.shape[0], dtype=np.complex128)
    _cy.trace_n(flat, out)
    return out.reshape(shape[:-2])


def sandwich(s, c):
    """dagger(s) @ c @ s with c a single 2x2 matrix."""
    if _cy is None:
        return _py.sandwich(s, c)
    flat, shape = _as_batch(s)
    out = np.empty_like(flat)
    _cy.sandwich_nc(flat, np.ascontiguousarray(c, dtype=np.complex128), out)
    return out.reshape(shape)
