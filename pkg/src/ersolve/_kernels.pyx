# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled element and mollifier kernels (same contracts as _kernels_py)."""

import numpy as np
from libc.math cimport exp


def strain_local(const double[:, :, :, ::1] S, const double[:, ::1] wdet,
                 const double[:, ::1] c1, const double[:, ::1] c2,
                 const double[:, :, ::1] eps):
    cdef Py_ssize_t T = S.shape[0], nq = S.shape[1], nk = S.shape[2], nd = S.shape[3]
    res_arr = np.zeros((T, nd))
    jac_arr = np.zeros((T, nd, nd))
    cdef double[:, ::1] res = res_arr
    cdef double[:, :, ::1] jac = jac_arr
    _strain_local(S, wdet, c1, c2, eps, res, jac, 0, T)
    return res_arr, jac_arr


def strain_local_range(const double[:, :, :, ::1] S, const double[:, ::1] wdet,
                       const double[:, ::1] c1, const double[:, ::1] c2,
                       const double[:, :, ::1] eps, double[:, ::1] res,
                       double[:, :, ::1] jac, Py_ssize_t start, Py_ssize_t stop):
    """Fill rows [start, stop) of preallocated outputs; releases the GIL."""
    with nogil:
        _strain_local(S, wdet, c1, c2, eps, res, jac, start, stop)


cdef void _strain_local(const double[:, :, :, ::1] S, const double[:, ::1] wdet,
                        const double[:, ::1] c1, const double[:, ::1] c2,
                        const double[:, :, ::1] eps, double[:, ::1] res,
                        double[:, :, ::1] jac, Py_ssize_t start, Py_ssize_t stop) noexcept nogil:
    cdef Py_ssize_t t, q, k, d, e
    cdef Py_ssize_t nq = S.shape[1], nk = S.shape[2], nd = S.shape[3]
    cdef double w1, w2, acc
    cdef double se[64]
    for t in range(start, stop):
        for q in range(nq):
            w1 = wdet[t, q] * c1[t, q]
            w2 = wdet[t, q] * c2[t, q]
            for d in range(nd):
                acc = 0.0
                for k in range(nk):
                    acc = acc + S[t, q, k, d] * eps[t, q, k]
                se[d] = acc
                res[t, d] += w1 * acc
            for d in range(nd):
                for e in range(d, nd):
                    acc = 0.0
                    for k in range(nk):
                        acc = acc + S[t, q, k, d] * S[t, q, k, e]
                    jac[t, d, e] += w1 * acc + w2 * se[d] * se[e]
        for d in range(nd):
            for e in range(d + 1, nd):
                jac[t, e, d] = jac[t, d, e]


def mollifier_weights(const double[:, ::1] targets, const double[:, ::1] sources,
                      const double[::1] src_weights, const long long[::1] indptr,
                      const long long[::1] indices, double radius):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    data_arr = np.zeros(indices.shape[0])
    counts_arr = np.zeros(n, dtype=np.int64)
    cdef double[::1] data = data_arr
    cdef long long[::1] counts = counts_arr
    cdef Py_ssize_t i, p, j
    cdef double dx, dy, z, w, total, inv_r2 = 1.0 / (radius * radius)
    with nogil:
        for i in range(n):
            total = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                dx = sources[j, 0] - targets[i, 0]
                dy = sources[j, 1] - targets[i, 1]
                z = (dx * dx + dy * dy) * inv_r2
                if z < 1.0:
                    w = exp(-1.0 / (1.0 - z)) * src_weights[j]
                    if w > 0.0:
                        counts[i] += 1
                    data[p] = w
                    total = total + w
            if total > 0.0:
                for p in range(indptr[i], indptr[i + 1]):
                    data[p] = data[p] / total
    return data_arr, counts_arr
