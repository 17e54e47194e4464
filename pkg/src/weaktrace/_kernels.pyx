# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops of the grid engine."""

import numpy as np

from libc.math cimport cos, sin

DEF RESEED = 64


def translate_inplace(double complex[:, ::1] x, double[::1] d, double dk):
    """Multiply row t of a DFT batch by exp(-i k d[t]) with k in FFT order."""
    cdef Py_ssize_t T = x.shape[0], N = x.shape[1], half = N // 2
    cdef Py_ssize_t t, j
    cdef double a, c, s, wr, wi, pr, pi_, tmp
    cdef double complex ph
    if d.shape[0] != T:
        raise ValueError("one shift per row required")
    if N % 2:
        raise ValueError("even row length required")
    with nogil:
        for t in range(T):
            if d[t] == 0.0:
                continue
            a = -dk * d[t]
            wr = cos(a)
            wi = sin(a)
            pr = 1.0
            pi_ = 0.0
            for j in range(half):
                if j % RESEED == 0:
                    pr = cos(a * j)
                    pi_ = sin(a * j)
                ph = pr + 1j * pi_
                x[t, j] = x[t, j] * ph
                if j:
                    x[t, N - j] = x[t, N - j] * (pr - 1j * pi_)
                tmp = pr * wr - pi_ * wi
                pi_ = pr * wi + pi_ * wr
                pr = tmp
            # Nyquist bin carries k = -half * dk
            x[t, half] = x[t, half] * (cos(a * half) - 1j * sin(a * half))


def beam_split(double complex[:, ::1] x1, double complex[:, ::1] x2, double t, double r):
    """Return (t x1 + i r x2, i r x1 + t x2)."""
    cdef Py_ssize_t T = x1.shape[0], N = x1.shape[1], i, j
    if x2.shape[0] != T or x2.shape[1] != N:
        raise ValueError("shape mismatch")
    y1 = np.empty((T, N), dtype=np.complex128)
    y2 = np.empty((T, N), dtype=np.complex128)
    cdef double complex[:, ::1] o1 = y1, o2 = y2
    cdef double complex ir = 1j * r, a, b
    with nogil:
        for i in range(T):
            for j in range(N):
                a = x1[i, j]
                b = x2[i, j]
                o1[i, j] = t * a + ir * b
                o2[i, j] = ir * a + t * b
    return y1, y2


def weighted_intensity(const double complex[:, ::1] x, const double[::1] w):
    """Row sums of w * |x|^2."""
    cdef Py_ssize_t T = x.shape[0], N = x.shape[1], i, j
    if w.shape[0] != N:
        raise ValueError("weight length mismatch")
    out = np.empty(T)
    cdef double[::1] o = out
    cdef double acc
    cdef double complex z
    with nogil:
        for i in range(T):
            acc = 0.0
            for j in range(N):
                z = x[i, j]
                acc = acc + w[j] * (z.real * z.real + z.imag * z.imag)
            o[i] = acc
    return out
