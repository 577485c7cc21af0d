# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: CSR matvec, fixed-radius neighbor search and
fused interpolant evaluation over a uniform cell grid.

Signatures mirror ``rbfdeflate._pykernels`` exactly.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, sqrt

cnp.import_array()


def csr_matvec(const cnp.intp_t[::1] indptr, const cnp.intp_t[::1] indices,
               const double[::1] data, const double[::1] x):
    cdef Py_ssize_t nrows = indptr.shape[0] - 1
    cdef Py_ssize_t i, k
    cdef double s
    out = np.empty(nrows, dtype=np.float64)
    cdef double[::1] y = out
    with nogil:
        for i in range(nrows):
            s = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                s = s + data[k] * x[indices[k]]
            y[i] = s
    return out


cdef inline bint _cell_key(const double* q, Py_ssize_t d, const double[::1] origin,
                           double h, const cnp.intp_t[::1] shape,
                           const cnp.intp_t[::1] strides,
                           const cnp.intp_t* off, cnp.intp_t* key) noexcept nogil:
    cdef Py_ssize_t a
    cdef cnp.intp_t c, acc = 0
    for a in range(d):
        c = <cnp.intp_t>floor((q[a] - origin[a]) / h) + off[a]
        if c < 0 or c >= shape[a]:
            return False
        acc += c * strides[a]
    key[0] = acc
    return True


cdef inline void _sort_row(cnp.intp_t* idx, double* val, Py_ssize_t n) noexcept nogil:
    # insertion sort; rows hold a few dozen to a few hundred entries
    cdef Py_ssize_t i, j
    cdef cnp.intp_t ki
    cdef double vi
    for i in range(1, n):
        ki = idx[i]
        vi = val[i]
        j = i - 1
        while j >= 0 and idx[j] > ki:
            idx[j + 1] = idx[j]
            val[j + 1] = val[j]
            j -= 1
        idx[j + 1] = ki
        val[j + 1] = vi


def radius_pairs(const double[:, ::1] queries, const double[:, ::1] sites,
                 const double[::1] origin, double h,
                 const cnp.intp_t[::1] shape, const cnp.intp_t[::1] strides,
                 const cnp.intp_t[::1] order, const cnp.intp_t[::1] starts,
                 const cnp.intp_t[:, ::1] offsets):
    """Return (indptr, indices, dist) of sites strictly within ``h`` of each
    query, column indices sorted ascending per row."""
    cdef Py_ssize_t nq = queries.shape[0], d = queries.shape[1]
    cdef Py_ssize_t noff = offsets.shape[0]
    cdef Py_ssize_t i, o, p, a, cnt, pos
    cdef cnp.intp_t key, j
    cdef double h2 = h * h, r2, diff

    indptr_arr = np.zeros(nq + 1, dtype=np.intp)
    cdef cnp.intp_t[::1] indptr = indptr_arr

    with nogil:
        for i in range(nq):
            cnt = 0
            for o in range(noff):
                if not _cell_key(&queries[i, 0], d, origin, h, shape, strides,
                                 &offsets[o, 0], &key):
                    continue
                for p in range(starts[key], starts[key + 1]):
                    j = order[p]
                    r2 = 0.0
                    for a in range(d):
                        diff = queries[i, a] - sites[j, a]
                        r2 = r2 + diff * diff
                    if r2 < h2:
                        cnt += 1
            indptr[i + 1] = indptr[i] + cnt

    nnz = indptr[nq]
    indices_arr = np.empty(nnz, dtype=np.intp)
    dist_arr = np.empty(nnz, dtype=np.float64)
    cdef cnp.intp_t[::1] indices = indices_arr
    cdef double[::1] dist = dist_arr

    with nogil:
        for i in range(nq):
            pos = indptr[i]
            for o in range(noff):
                if not _cell_key(&queries[i, 0], d, origin, h, shape, strides,
                                 &offsets[o, 0], &key):
                    continue
                for p in range(starts[key], starts[key + 1]):
                    j = order[p]
                    r2 = 0.0
                    for a in range(d):
                        diff = queries[i, a] - sites[j, a]
                        r2 = r2 + diff * diff
                    if r2 < h2:
                        indices[pos] = j
                        dist[pos] = sqrt(r2)
                        pos += 1
            if indptr[i + 1] - indptr[i] > 1:
                _sort_row(&indices[indptr[i]], &dist[indptr[i]],
                          indptr[i + 1] - indptr[i])
    return indptr_arr, indices_arr, dist_arr


def rbf_eval_sum(const double[:, ::1] queries, const double[:, ::1] sites,
                 const double[::1] weights,
                 const double[::1] origin, double h,
                 const cnp.intp_t[::1] shape, const cnp.intp_t[::1] strides,
                 const cnp.intp_t[::1] order, const cnp.intp_t[::1] starts,
                 const cnp.intp_t[:, ::1] offsets):
    """Return sum_j weights[j] * phi(|q - site_j| / h) for every query, with
    the Wendland C2 profile phi(t) = (1 - t)^4 (4t + 1)."""
    cdef Py_ssize_t nq = queries.shape[0], d = queries.shape[1]
    cdef Py_ssize_t noff = offsets.shape[0]
    cdef Py_ssize_t i, o, p, a
    cdef cnp.intp_t key, j
    cdef double h2 = h * h, r2, diff, t, s1, s2
    out = np.empty(nq, dtype=np.float64)
    cdef double[::1] y = out
    with nogil:
        for i in range(nq):
            s1 = 0.0
            for o in range(noff):
                if not _cell_key(&queries[i, 0], d, origin, h, shape, strides,
                                 &offsets[o, 0], &key):
                    continue
                for p in range(starts[key], starts[key + 1]):
                    j = order[p]
                    r2 = 0.0
                    for a in range(d):
                        diff = queries[i, a] - sites[j, a]
                        r2 = r2 + diff * diff
                    if r2 < h2:
                        t = sqrt(r2) / h
                        s2 = (1.0 - t) * (1.0 - t)
                        s1 = s1 + weights[j] * (s2 * s2 * (4.0 * t + 1.0))
            y[i] = s1
    return out
