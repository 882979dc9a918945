"""Pure NumPy kernels for batched 2x2 complex matrix algebra.

Every function accepts arrays of shape (..., 2, 2) with complex128 entries and
is vectorized over the leading axes.  This module is the reference
implementation; ``matlat._kernels_cy`` provides a compiled twin with identical
semantics, and ``matlat.kernels`` picks between them at import time.
"""

import numpy as np

__all__ = [
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


def _out_shape(a, b):
    return np.broadcast_shapes(a.shape[:-2], b.shape[:-2]) + (2, 2)


def mul(a, b):
    """Matrix product a @ b, broadcasting over leading axes."""
    a = np.asarray(a)
    b = np.asarray(b)
    out = np.empty(_out_shape(a, b), dtype=np.complex128)
    a11, a12 = a[..., 0, 0], a[..., 0, 1]
    a21, a22 = a[..., 1, 0], a[..., 1, 1]
    b11, b12 = b[..., 0, 0], b[..., 0, 1]
    b21, b22 = b[..., 1, 0], b[..., 1, 1]
    out[..., 0, 0] = a11 * b11 + a12 * b21
    out[..., 0, 1] = a11 * b12 + a12 * b22
    out[..., 1, 0] = a21 * b11 + a22 * b21
    out[..., 1, 1] = a21 * b12 + a22 * b22
    return out


def dagger(a):
    """Hermitian conjugate."""
    a = np.asarray(a)
    return np.conj(np.swapaxes(a, -1, -2))


def tilde(a):
    """Adjugate-style conjugate (tr a)e - a: swaps the diagonal, negates the rest."""
    a = np.asarray(a)
    out = np.empty_like(a, dtype=np.complex128)
    out[..., 0, 0] = a[..., 1, 1]
    out[..., 0, 1] = -a[..., 0, 1]
    out[..., 1, 0] = -a[..., 1, 0]
    out[..., 1, 1] = a[..., 0, 0]
    return out


def star(a):
    """Composition of tilde and dagger (order-independent)."""
    a = np.asarray(a)
    out = np.empty_like(a, dtype=np.complex128)
    out[..., 0, 0] = np.conj(a[..., 1, 1])
    out[..., 0, 1] = -np.conj(a[..., 1, 0])
    out[..., 1, 0] = -np.conj(a[..., 0, 1])
    out[..., 1, 1] = np.conj(a[..., 0, 0])
    return out


def hat(a):
    """(det a / |det a|) * star(a).  Sites with det a = 0 come back as NaN."""
    a = np.asarray(a)
    d = det(a)
    with np.errstate(invalid="ignore", divide="ignore"):
        phase = d / np.abs(d)
    return phase[..., None, None] * star(a)


def comm(a, b):
    """Commutator a @ b - b @ a."""
    a = np.asarray(a)
    b = np.asarray(b)
    out = np.empty(_out_shape(a, b), dtype=np.complex128)
    a11, a12 = a[..., 0, 0], a[..., 0, 1]
    a21, a22 = a[..., 1, 0], a[..., 1, 1]
    b11, b12 = b[..., 0, 0], b[..., 0, 1]
    b21, b22 = b[..., 1, 0], b[..., 1, 1]
    out[..., 0, 0] = a12 * b21 - a21 * b12
    out[..., 0, 1] = a11 * b12 + a12 * b22 - b11 * a12 - b12 * a22
    out[..., 1, 0] = a21 * b11 + a22 * b21 - b21 * a11 - b22 * a21
    out[..., 1, 1] = a21 * b12 - a12 * b21
    return out


def det(a):
    """Determinant, shape (...,)."""
    a = np.asarray(a)
    return a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]


def trace(a):
    """Trace, shape (...,)."""
    a = np.asarray(a)
    return a[..., 0, 0] + a[..., 1, 1]


def sandwich(s, c):
    """dagger(s) @ c @ s with a single 2x2 matrix c, batched over s."""
    return mul(dagger(s), mul(c, s))
