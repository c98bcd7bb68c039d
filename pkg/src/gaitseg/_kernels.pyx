# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Must stay numerically interchangeable with _kernels_py."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log2, sqrt, INFINITY, fabs

cnp.import_array()


def row_entropy(const cnp.uint8_t[:, ::1] levels):
    cdef Py_ssize_t n = levels.shape[0], m = levels.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double p, h
    cdef long counts[256]
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] res = out
    if m == 0:
        return out
    for i in range(n):
        for k in range(256):
            counts[k] = 0
        for j in range(m):
            counts[levels[i, j]] += 1
        h = 0.0
        for k in range(256):
            if counts[k] > 0:
                p = <double>counts[k] / <double>m
                h -= p * log2(p)
        res[i] = h
    return out


def lars_gammas(const double[:, ::1] corr, const double[:, ::1] direction,
                double common, const cnp.uint8_t[::1] active, double tol=1e-12):
    cdef Py_ssize_t g = corr.shape[0], p = corr.shape[1]
    cdef Py_ssize_t i, j
    cdef double aa, ca, cc, qa, qb, qc, disc, r1, r2, best, sq
    out = np.full(g, np.inf, dtype=np.float64)
    cdef double[::1] res = out
    for i in range(g):
        if active[i]:
            continue
        aa = 0.0
        ca = 0.0
        cc = 0.0
        for j in range(p):
            aa += direction[i, j] * direction[i, j]
            ca += corr[i, j] * direction[i, j]
            cc += corr[i, j] * corr[i, j]
        qa = aa - common
        qb = -2.0 * (ca - common)
        qc = cc - common
        best = INFINITY
        if fabs(qa) <= tol * common:
            if qb != 0.0:
                r1 = -qc / qb
                if r1 >= -tol and r1 <= 1.0 + tol:
                    best = r1
        else:
            disc = qb * qb - 4.0 * qa * qc
            if disc < 0.0:
                disc = 0.0
            sq = sqrt(disc)
            r1 = (-qb - sq) / (2.0 * qa)
            r2 = (-qb + sq) / (2.0 * qa)
            if r1 >= -tol and r1 <= 1.0 + tol and r1 < best:
                best = r1
            if r2 >= -tol and r2 <= 1.0 + tol and r2 < best:
                best = r2
        if best < INFINITY:
            res[i] = best if best > 0.0 else 0.0
    return out


def sq_distances(const double[:, ::1] gallery, const double[::1] query):
    cdef Py_ssize_t n = gallery.shape[0], d = gallery.shape[1]
    cdef Py_ssize_t i, j
    cdef double acc, diff
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] res = out
    for i in range(n):
        acc = 0.0
        for j in range(d):
            diff = gallery[i, j] - query[j]
            acc += diff * diff
        res[i] = acc
    return out
