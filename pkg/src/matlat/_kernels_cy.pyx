# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for batched 2x2 complex matrix algebra.

Mirrors matlat._kernels_py on flattened (n, 2, 2) contiguous complex128
arrays; matlat.kernels adapts shapes and dispatches.
"""

from libc.math cimport sqrt, NAN

ctypedef double complex cplx


def mul_nn(const cplx[:, :, ::1] a, const cplx[:, :, ::1] b, cplx[:, :, ::1] out):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef cplx a11, a12, a21, a22, b11, b12, b21, b22
    with nogil:
        for i in range(n):
            a11 = a[i, 0, 0]; a12 = a[i, 0, 1]; a21 = a[i, 1, 0]; a22 = a[i, 1, 1]
            b11 = b[i, 0, 0]; b12 = b[i, 0, 1]; b21 = b[i, 1, 0]; b22 = b[i, 1, 1]
            out[i, 0, 0] = a11 * b11 + a12 * b21
            out[i, 0, 1] = a11 * b12 + a12 * b22
            out[i, 1, 0] = a21 * b11 + a22 * b21
            out[i, 1, 1] = a21 * b12 + a22 * b22


def mul_cn(const cplx[:, ::1] c, const cplx[:, :, ::1] a, cplx[:, :, ::1] out):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef cplx c11 = c[0, 0], c12 = c[0, 1], c21 = c[1, 0], c22 = c[1, 1]
    cdef cplx a11, a12, a21, a22
    with nogil:
        for i in range(n):
            a11 = a[i, 0, 0]; a12 = a[i, 0, 1]; a21 = a[i, 1, 0]; a22 = a[i, 1, 1]
            out[i, 0, 0] = c11 * a11 + c12 * a21
            out[i, 0, 1] = c11 * a12 + c12 * a22
            out[i, 1, 0] = c21 * a11 + c22 * a21
            out[i, 1, 1] = c21 * a12 + c22 * a22


def mul_nc(const cplx[:, :, ::1] a, const cplx[:, ::1] c, cplx[:, :, ::1] out):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef cplx c11 = c[0, 0], c12 = c[0, 1], c21 = c[1, 0], c22 = c[1, 1]
    cdef cplx a11, a12, a21, a22
    with nogil:
        for i in range(n):
            a11 = a[i, 0, 0]; a12 = a[i, 0, 1]; a21 = a[i, 1, 0]; a22 = a[i, 1, 1]
            out[i, 0, 0] = a11 * c11 + a12 * c21
            out[i, 0, 1] = a11 * c12 + a12 * c22
            out[i, 1, 0] = a21 * c11 + a22 * c21
            out[i, 1, 1] = a21 * c12 + a22 * c22


def dagger_n(const cplx[:, :, ::1] a, cplx[:, :, ::1] out):
    cdef Py_ssize_t i, n = a.shape[0]
    with nogil:
        for i in range(n):
            out[i, 0, 0] = a[i, 0, 0].conjugate()
            out[i, 0, 1] = a[i, 1, 0].conjugate()
            out[i, 1, 0] = a[i, 0, 1].conjugate()
            out[i, 1, 1] = a[i, 1, 1].conjugate()


def tilde_n(const cplx[:, :, ::1] a, cplx[:, :, ::1] out):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef cplx a11, a12, a21, a22
    with nogil:
        for i in range(n):
            a11 = a[i, 0, 0]; a12 = a[i, 0, 1]; a21 = a[i, 1, 0]; a22 = a[i, 1, 1]
            out[i, 0, 0] = a22
            out[i, 0, 1] = -a12
            out[i, 1, 0] = -a21
            out[i, 1, 1] = a11


def star_n(const cplx[:, :, ::1] a, cplx[:, :, ::1] out):
    cdef Py_ssize_t i, n = a.shape[0]
    with nogil:
        for i in range(n):
            out[i, 0, 0] = a[i, 1, 1].conjugate()
            out[i, 0, 1] = -a[i, 1, 0].conjugate()
            out[i, 1, 0] = -a[i, 0, 1].conjugate()
            out[i, 1, 1] = a[i, 0, 0].conjugate()


def hat_n(const cplx[:, :, ::1] a, cplx[:, :, ::1] out):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef cplx a11, a12, a21, a22, d, phase
    cdef double mag
    with nogil:
        for i in range(n):
            a11 = a[i, 0, 0]; a12 = a[i, 0, 1]; a21 = a[i, 1, 0]; a22 = a[i, 1, 1]
            d = a11 * a22 - a12 * a21
            mag = sqrt(d.real * d.real + d.imag * d.imag)
            if mag == 0.0:
                phase = NAN
            else:
                phase = d / mag
            out[i, 0, 0] = phase * a22.conjugate()
            out[i, 0, 1] = -phase * a21.conjugate()
            out[i, 1, 0] = -phase * a12.conjugate()
            out[i, 1, 1] = phase * a11.conjugate()


def comm_nn(const cplx[:, :, ::1] a, const cplx[:, :, ::1] b, cplx[:, :, ::1] out):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef cplx a11, a12, a21, a22, b11, b12, b21, b22
    with nogil:
        for i in range(n):
            a11 = a[i, 0, 0]; a12 = a[i, 0, 1]; a21 = a[i, 1, 0]; a22 = a[i, 1, 1]
            b11 = b[i, 0, 0]; b12 = b[i, 0, 1]; b21 = b[i, 1, 0]; b22 = b[i, 1, 1]
            out[i, 0, 0] = a12 * b21 - a21 * b12
            out[i, 0, 1] = a11 * b12 + a12 * b22 - b11 * a12 - b12 * a22
            out[i, 1, 0] = a21 * b11 + a22 * b21 - b21 * a11 - b22 * a21
            out[i, 1, 1] = a21 * b12 - a12 * b21


def det_n(const cplx[:, :, ::1] a, cplx[::1] out):
    cdef Py_ssize_t i, n = a.shape[0]
    with nogil:
        for i in range(n):
            out[i] = a[i, 0, 0] * a[i, 1, 1] - a[i, 0, 1] * a[i, 1, 0]


def trace_n(const cplx[:, :, ::1] a, cplx[::1] out):
    cdef Py_ssize_t i, n = a.shape[0]
    with nogil:
        for i in range(n):
            out[i] = a[i, 0, 0] + a[i, 1, 1]


def sandwich_nc(const cplx[:, :, ::1] s, const cplx[:, ::1] c, cplx[:, :, ::1] out):
    """dagger(s) @ c @ s per batch entry, c fixed."""
    cdef Py_ssize_t i, n = s.shape[0]
    cdef cplx c11 = c[0, 0], c12 = c[0, 1], c21 = c[1, 0], c22 = c[1, 1]
    cdef cplx s11, s12, s21, s22, d11, d12, d21, d22, m11, m12, m21, m22
    with nogil:
        for i in range(n):
            s11 = s[i, 0, 0]; s12 = s[i, 0, 1]; s21 = s[i, 1, 0]; s22 = s[i, 1, 1]
            d11 = s11.conjugate(); d12 = s21.conjugate()
            d21 = s12.conjugate(); d22 = s22.conjugate()
            m11 = c11 * s11 + c12 * s21
            m12 = c11 * s12 + c12 * s22
            m21 = c21 * s11 + c22 * s21
            m22 = c21 * s12 + c22 * s22
            out[i, 0, 0] = d11 * m11 + d12 * m21
            out[i, 0, 1] = d11 * m12 + d12 * m22
            out[i, 1, 0] = d21 * m11 + d22 * m21
            out[i, 1, 1] = d21 * m12 + d22 * m22
