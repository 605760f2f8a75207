# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled pointwise kernels; same contracts as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

BACKEND = "cython"


def sphere_sff(const double[:, ::1] y, const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t m = y.shape[0], n = y.shape[1], i, j
    out_arr = np.empty((m, n))
    cdef double[:, ::1] out = out_arr
    cdef double r2, ya, yb, ab, inv3, inv5
    with nogil:
        for j in range(n):
            r2 = 0.0; ya = 0.0; yb = 0.0; ab = 0.0
            for i in range(m):
                r2 += y[i, j] * y[i, j]
                ya += y[i, j] * a[i, j]
                yb += y[i, j] * b[i, j]
                ab += a[i, j] * b[i, j]
            inv3 = 1.0 / (r2 * sqrt(r2))
            inv5 = inv3 / r2
            for i in range(m):
                out[i, j] = (a[i, j] * yb + b[i, j] * ya + y[i, j] * ab) * inv3 \
                    - 3.0 * y[i, j] * (ya * yb * inv5)
    return out_arr


def sphere_sff_contract(const double[:, ::1] y, const double[:, :, ::1] a, const double[:, :, ::1] b):
    cdef Py_ssize_t m = y.shape[0], n = y.shape[1], nd = a.shape[1], i, j, k
    out_arr = np.zeros((m, n))
    cdef double[:, ::1] out = out_arr
    cdef double r2, ya, yb, ab, inv3, inv5
    with nogil:
        for j in range(n):
            r2 = 0.0
            for i in range(m):
                r2 += y[i, j] * y[i, j]
            inv3 = 1.0 / (r2 * sqrt(r2))
            inv5 = inv3 / r2
            for k in range(nd):
                ya = 0.0; yb = 0.0; ab = 0.0
                for i in range(m):
                    ya += y[i, j] * a[i, k, j]
                    yb += y[i, j] * b[i, k, j]
                    ab += a[i, k, j] * b[i, k, j]
                for i in range(m):
                    out[i, j] += (a[i, k, j] * yb + b[i, k, j] * ya + y[i, j] * ab) * inv3 \
                        - 3.0 * y[i, j] * (ya * yb * inv5)
    return out_arr


cdef inline void _deriv_point(const double[:, ::1] y, const double[:, ::1] c, const double* a, const double* b,
                              Py_ssize_t stride, Py_ssize_t j, Py_ssize_t m,
                              double[:, ::1] out) noexcept nogil:
    cdef double r2 = 0.0, s = 0.0, t = 0.0, yc = 0.0, ca = 0.0, cb = 0.0, ab = 0.0
    cdef double inv3, inv5, inv7, ai, bi
    cdef Py_ssize_t i
    for i in range(m):
        ai = a[i * stride]
        bi = b[i * stride]
        r2 += y[i, j] * y[i, j]
        s += y[i, j] * ai
        t += y[i, j] * bi
        yc += y[i, j] * c[i, j]
        ca += c[i, j] * ai
        cb += c[i, j] * bi
        ab += ai * bi
    inv3 = 1.0 / (r2 * sqrt(r2))
    inv5 = inv3 / r2
    inv7 = inv5 / r2
    for i in range(m):
        ai = a[i * stride]
        bi = b[i * stride]
        out[i, j] += (ai * cb + bi * ca + c[i, j] * ab) * inv3 \
            - 3.0 * (ai * t + bi * s + y[i, j] * ab) * yc * inv5 \
            - 3.0 * (c[i, j] * s * t + y[i, j] * (ca * t + s * cb)) * inv5 \
            + 15.0 * y[i, j] * s * t * yc * inv7


def sphere_sff_deriv(const double[:, ::1] y, const double[:, ::1] c, const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t m = y.shape[0], n = y.shape[1], j
    out_arr = np.zeros((m, n))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for j in range(n):
            _deriv_point(y, c, &a[0, j], &b[0, j], n, j, m, out)
    return out_arr


def sphere_sff_deriv_contract(const double[:, ::1] y, const double[:, ::1] c,
                              const double[:, :, ::1] a, const double[:, :, ::1] b):
    cdef Py_ssize_t m = y.shape[0], n = y.shape[1], nd = a.shape[1], j, k
    out_arr = np.zeros((m, n))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for j in range(n):
            for k in range(nd):
                _deriv_point(y, c, &a[0, k, j], &b[0, k, j], nd * n, j, m, out)
    return out_arr


def normalize(const double[:, ::1] u):
    cdef Py_ssize_t m = u.shape[0], n = u.shape[1], i, j
    out_arr = np.empty((m, n))
    cdef double[:, ::1] out = out_arr
    cdef double r2, inv
    with nogil:
        for j in range(n):
            r2 = 0.0
            for i in range(m):
                r2 += u[i, j] * u[i, j]
            inv = 1.0 / sqrt(r2)
            for i in range(m):
                out[i, j] = u[i, j] * inv
    return out_arr


def ball_sums(const double[::1] values, const cnp.int64_t[:, ::1] order, const cnp.int64_t[:, ::1] cuts):
    cdef Py_ssize_t nc = order.shape[0], npts = order.shape[1], nr = cuts.shape[1]
    cdef Py_ssize_t c, i, j
    cdef double acc
    out_arr = np.empty((nc, nr))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for c in range(nc):
            acc = 0.0
            i = 0
            for j in range(nr):
                # same left-to-right accumulation order as the numpy fallback's cumsum
                while i < cuts[c, j]:
                    acc += values[order[c, i]]
                    i += 1
                out[c, j] = acc
    return out_arr
