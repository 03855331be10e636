# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the reduction kernels in ``_kernels_py``.

Fused loops avoid the O(N*M) broadcast temporaries of the numpy fallback.
Dimensions 1 and 2 of the lattice envelopes are specialized (the hot cases);
higher dimensions raise NotImplementedError and the dispatcher falls back.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, ceil, fabs, floor, pow, sqrt

cnp.import_array()


cdef inline double _dist(const double* a, const double* b, Py_ssize_t d, double p) noexcept nogil:
    cdef double acc = 0.0
    cdef double u
    cdef Py_ssize_t i
    if p == 2.0:
        for i in range(d):
            u = a[i] - b[i]
            acc += u * u
        return sqrt(acc)
    if p == INFINITY:
        for i in range(d):
            u = fabs(a[i] - b[i])
            if u > acc:
                acc = u
        return acc
    for i in range(d):
        acc += pow(fabs(a[i] - b[i]), p)
    return pow(acc, 1.0 / p)


def pairwise_max_quotient(vals, pts, double p=2.0):
    cdef double[::1] v = np.ascontiguousarray(vals, dtype=np.float64)
    cdef double[:, ::1] x = np.ascontiguousarray(pts, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0], d = x.shape[1]
    cdef Py_ssize_t i, j
    cdef double best = 0.0, dist, q
    if n < 2:
        return 0.0
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                dist = _dist(&x[i, 0], &x[j, 0], d, p)
                if dist > 1e-300:
                    q = fabs(v[i] - v[j]) / dist
                    if q > best:
                        best = q
    return best


def cone_min(vals, pts, queries, double slope, double p=2.0):
    cdef double[::1] v = np.ascontiguousarray(vals, dtype=np.float64)
    cdef double[:, ::1] x = np.ascontiguousarray(pts, dtype=np.float64)
    cdef double[:, ::1] q = np.ascontiguousarray(np.atleast_2d(queries), dtype=np.float64)
    cdef Py_ssize_t m = x.shape[0], nq = q.shape[0], d = x.shape[1]
    out_arr = np.empty(nq)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, k
    cdef double best, cand
    with nogil:
        for k in range(nq):
            best = INFINITY
            for i in range(m):
                cand = v[i] + slope * _dist(&q[k, 0], &x[i, 0], d, p)
                if cand < best:
                    best = cand
            out[k] = best
    return out_arr


def cone_max(vals, pts, queries, double slope, double p=2.0):
    neg = -np.ascontiguousarray(vals, dtype=np.float64)
    return -cone_min(neg, pts, queries, slope, p)


def lattice_envelope_net(vals, steps, double t, double radius, int sign):
    arr = np.ascontiguousarray(vals, dtype=np.float64)
    if arr.ndim == 1:
        return _env_net_1d(arr, float(steps[0]), t, radius, sign)
    if arr.ndim == 2:
        return _env_net_2d(arr, float(steps[0]), float(steps[1]), t, radius, sign)
    raise NotImplementedError("compiled envelope supports 1-D and 2-D lattices")


cdef _env_net_1d(double[::1] v, double h, double t, double radius, int sign):
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t w = <Py_ssize_t>floor(radius / h + 1e-12)
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t j, o, lo, hi
    cdef double best, c, cand
    cdef double two_t = 2.0 * t
    with nogil:
        for j in range(n):
            lo = -w if j >= w else -j
            hi = w if j + w < n else n - 1 - j
            best = INFINITY
            for o in range(lo, hi + 1):
                c = (o * h) * (o * h) / two_t
                cand = v[j + o] + c if sign > 0 else -v[j + o] + c
                if cand < best:
                    best = cand
            out[j] = best if sign > 0 else -best
    return out_arr


cdef _env_net_2d(double[:, ::1] v, double h0, double h1, double t, double radius, int sign):
    cdef Py_ssize_t n0 = v.shape[0], n1 = v.shape[1]
    cdef Py_ssize_t w0 = <Py_ssize_t>floor(radius / h0 + 1e-12)
    cdef Py_ssize_t w1 = <Py_ssize_t>floor(radius / h1 + 1e-12)
    out_arr = np.empty((n0, n1))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, a, b, a0, a1, b0, b1
    cdef double best, c, cand, ra
    cdef double two_t = 2.0 * t
    cdef double r2cap = radius * radius * (1 + 1e-12)
    with nogil:
        for i in range(n0):
            a0 = -w0 if i >= w0 else -i
            a1 = w0 if i + w0 < n0 else n0 - 1 - i
            for j in range(n1):
                b0 = -w1 if j >= w1 else -j
                b1 = w1 if j + w1 < n1 else n1 - 1 - j
                best = INFINITY
                for a in range(a0, a1 + 1):
                    ra = (a * h0) * (a * h0)
                    if ra > r2cap:
                        continue
                    for b in range(b0, b1 + 1):
                        c = ra + (b * h1) * (b * h1)
                        if c > r2cap:
                            continue
                        c = c / two_t
                        cand = v[i + a, j + b] + c if sign > 0 else -v[i + a, j + b] + c
                        if cand < best:
                            best = cand
                out[i, j] = best if sign > 0 else -best
    return out_arr


def lattice_envelope_at(vals, origin, steps, double t, double radius, int sign, queries):
    arr = np.ascontiguousarray(vals, dtype=np.float64)
    if arr.ndim > 2:
        raise NotImplementedError("compiled envelope supports 1-D and 2-D lattices")
    q = np.ascontiguousarray(np.atleast_2d(queries), dtype=np.float64)
    org = np.ascontiguousarray(origin, dtype=np.float64)
    stp = np.ascontiguousarray(steps, dtype=np.float64)
    if arr.ndim == 1:
        return _env_at_1d(arr, org[0], stp[0], t, radius, sign, q)
    return _env_at_2d(arr, org, stp, t, radius, sign, q)


cdef _env_at_1d(double[::1] v, double org, double h, double t, double radius,
                int sign, double[:, ::1] q):
    cdef Py_ssize_t n = v.shape[0], nq = q.shape[0]
    out_arr = np.empty(nq)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t k, i, lo, hi
    cdef double x, y, r2, best, cand
    cdef double two_t = 2.0 * t
    cdef double r2cap = radius * radius * (1 + 1e-12)
    with nogil:
        for k in range(nq):
            x = q[k, 0]
            lo = <Py_ssize_t>ceil((x - radius - org) / h - 1e-12)
            hi = <Py_ssize_t>floor((x + radius - org) / h + 1e-12)
            if lo < 0:
                lo = 0
            if hi > n - 1:
                hi = n - 1
            best = INFINITY
            for i in range(lo, hi + 1):
                y = org + i * h
                r2 = (x - y) * (x - y)
                if r2 > r2cap:
                    continue
                cand = (v[i] if sign > 0 else -v[i]) + r2 / two_t
                if cand < best:
                    best = cand
            if best == INFINITY:
                i = <Py_ssize_t>floor((x - org) / h + 0.5)
                if i < 0:
                    i = 0
                if i > n - 1:
                    i = n - 1
                y = org + i * h
                best = (v[i] if sign > 0 else -v[i]) + (x - y) * (x - y) / two_t
            out[k] = best if sign > 0 else -best
    return out_arr


cdef _env_at_2d(double[:, ::1] v, double[::1] org, double[::1] stp, double t,
                double radius, int sign, double[:, ::1] q):
    cdef Py_ssize_t n0 = v.shape[0], n1 = v.shape[1], nq = q.shape[0]
    out_arr = np.empty(nq)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t k, i, j, lo0, hi0, lo1, hi1
    cdef double x0, x1, y0, y1, r2, ra, best, cand
    cdef double two_t = 2.0 * t
    cdef double r2cap = radius * radius * (1 + 1e-12)
    with nogil:
        for k in range(nq):
            x0 = q[k, 0]
            x1 = q[k, 1]
            lo0 = <Py_ssize_t>ceil((x0 - radius - org[0]) / stp[0] - 1e-12)
            hi0 = <Py_ssize_t>floor((x0 + radius - org[0]) / stp[0] + 1e-12)
            lo1 = <Py_ssize_t>ceil((x1 - radius - org[1]) / stp[1] - 1e-12)
            hi1 = <Py_ssize_t>floor((x1 + radius - org[1]) / stp[1] + 1e-12)
            if lo0 < 0:
                lo0 = 0
            if hi0 > n0 - 1:
                hi0 = n0 - 1
            if lo1 < 0:
                lo1 = 0
            if hi1 > n1 - 1:
                hi1 = n1 - 1
            best = INFINITY
            for i in range(lo0, hi0 + 1):
                y0 = org[0] + i * stp[0]
                ra = (x0 - y0) * (x0 - y0)
                if ra > r2cap:
                    continue
                for j in range(lo1, hi1 + 1):
                    y1 = org[1] + j * stp[1]
                    r2 = ra + (x1 - y1) * (x1 - y1)
                    if r2 > r2cap:
                        continue
                    cand = (v[i, j] if sign > 0 else -v[i, j]) + r2 / two_t
                    if cand < best:
                        best = cand
            if best == INFINITY:
                i = <Py_ssize_t>floor((x0 - org[0]) / stp[0] + 0.5)
                j = <Py_ssize_t>floor((x1 - org[1]) / stp[1] + 0.5)
                if i < 0:
                    i = 0
                if i > n0 - 1:
                    i = n0 - 1
                if j < 0:
                    j = 0
                if j > n1 - 1:
                    j = n1 - 1
                y0 = org[0] + i * stp[0]
                y1 = org[1] + j * stp[1]
                r2 = (x0 - y0) * (x0 - y0) + (x1 - y1) * (x1 - y1)
                best = (v[i, j] if sign > 0 else -v[i, j]) + r2 / two_t
            out[k] = best if sign > 0 else -best
    return out_arr
