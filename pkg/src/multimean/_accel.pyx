# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot loops; see ``_accel_py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs

cnp.import_array()

cdef double BIG = 1e300
cdef double REJECT_SLACK = 1e-13


def subsample_terms(double[:, ::1] k, long long[:, ::1] idx):
    cdef Py_ssize_t r = idx.shape[0], m
    cdef double t2 = 0.0, t3 = 0.0, k12
    for m in range(r):
        k12 = k[idx[m, 0], idx[m, 1]]
        t2 += k12 * k[idx[m, 0], idx[m, 2]]
        t3 += k12 * k[idx[m, 2], idx[m, 3]]
    return t2, t3


cdef double _objective(double[:, ::1] a, double[::1] b, double[::1] w, double[::1] g):
    """Fill ``g = A w + b`` and return ``w'(g + b) / 2``."""
    cdef Py_ssize_t n = a.shape[0], i, j
    cdef double v, f = 0.0
    for i in range(n):
        v = b[i]
        for j in range(n):
            v += a[i, j] * w[j]
        g[i] = v
        f += w[i] * (v + b[i])
    return 0.5 * f


def egd_loop(double[:, ::1] a, double[::1] b, double[::1] w, free,
             double eta0, long n_bags, long t_max, double tol, double gap_tol,
             double scale, double clip):
    cdef long long[::1] fi = np.ascontiguousarray(np.flatnonzero(free), dtype=np.int64)
    cdef Py_ssize_t nf = fi.shape[0], n = a.shape[0], p
    cdef double[::1] g = np.empty(n)
    cdef double[::1] g_new = np.empty(n)
    cdef double[::1] cand = np.empty(n)
    cdef double[::1] e = np.empty(nf)
    cdef double eta, mx, s, change, v, f, f_new, wg, gmin
    cdef long t = 0
    cand[:] = w
    f = _objective(a, b, w, g)
    while t < t_max:
        t += 1
        eta = eta0 / (1.0 + <double>t / n_bags) / scale
        mx = -1e308
        for p in range(nf):
            v = -eta * g[fi[p]]
            if v != v or v < -BIG:
                v = -BIG
            elif v > BIG:
                v = BIG
            e[p] = v
            if v > mx:
                mx = v
        s = 0.0
        for p in range(nf):
            v = e[p] - mx
            if v < -clip:
                v = -clip
            e[p] = w[fi[p]] * exp(v)
            s += e[p]
        for p in range(nf):
            cand[fi[p]] = e[p] / s
        f_new = _objective(a, b, cand, g_new)
        if not f_new <= f + REJECT_SLACK * fabs(f):
            continue
        change = 0.0
        for p in range(nf):
            v = cand[fi[p]] - w[fi[p]]
            change += v * v
            w[fi[p]] = cand[fi[p]]
        g[:] = g_new
        f = f_new
        if change <= tol:
            wg = 0.0
            gmin = g[fi[0]]
            for p in range(nf):
                wg += w[fi[p]] * g[fi[p]]
                if g[fi[p]] < gmin:
                    gmin = g[fi[p]]
            if wg - gmin <= gap_tol * fabs(f):
                break
    return t
