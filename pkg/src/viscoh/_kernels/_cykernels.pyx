# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: pairwise ROUGE-L, centroid assignment, medoid row sums."""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt
from libc.stdlib cimport free, malloc

cnp.import_array()


cdef int _lcs(const int* a, Py_ssize_t na, const int* b, Py_ssize_t nb,
              int* prev, int* cur) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef int ai, up, left
    for j in range(nb + 1):
        prev[j] = 0
    for i in range(na):
        ai = a[i]
        cur[0] = 0
        for j in range(nb):
            if ai == b[j]:
                cur[j + 1] = prev[j] + 1
            else:
                up = prev[j + 1]
                left = cur[j]
                cur[j + 1] = up if up >= left else left
        for j in range(nb + 1):
            prev[j] = cur[j]
    return prev[nb]


def lcs_length(a, b):
    cdef cnp.ndarray[cnp.int32_t, ndim=1] aa = np.ascontiguousarray(a, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] bb = np.ascontiguousarray(b, dtype=np.int32)
    cdef Py_ssize_t na = aa.shape[0]
    cdef Py_ssize_t nb = bb.shape[0]
    if na == 0 or nb == 0:
        return 0
    cdef int* prev = <int*> malloc((nb + 1) * sizeof(int))
    cdef int* cur = <int*> malloc((nb + 1) * sizeof(int))
    if prev == NULL or cur == NULL:
        free(prev)
        free(cur)
        raise MemoryError()
    cdef int result
    try:
        result = _lcs(<const int*> aa.data, na, <const int*> bb.data, nb, prev, cur)
    finally:
        free(prev)
        free(cur)
    return result


def rouge_f1_block(flat_a, off_a, flat_b, off_b):
    cdef cnp.ndarray[cnp.int32_t, ndim=1] fa = np.ascontiguousarray(flat_a, dtype=np.int32)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] oa = np.ascontiguousarray(off_a, dtype=np.int64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] fb = np.ascontiguousarray(flat_b, dtype=np.int32)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ob = np.ascontiguousarray(off_b, dtype=np.int64)
    cdef Py_ssize_t na = oa.shape[0] - 1
    cdef Py_ssize_t nb = ob.shape[0] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((na, nb), dtype=np.float64)
    cdef Py_ssize_t max_nb = 0
    cdef Py_ssize_t i, j, la, lb
    for j in range(nb):
        lb = ob[j + 1] - ob[j]
        if lb > max_nb:
            max_nb = lb
    if max_nb == 0 or na == 0:
        return out
    cdef int* prev = <int*> malloc((max_nb + 1) * sizeof(int))
    cdef int* cur = <int*> malloc((max_nb + 1) * sizeof(int))
    if prev == NULL or cur == NULL:
        free(prev)
        free(cur)
        raise MemoryError()
    cdef const int* pa = <const int*> fa.data
    cdef const int* pb = <const int*> fb.data
    cdef double[:, ::1] out_v = out
    cdef int lcs
    cdef double recall, precision
    with nogil:
        for i in range(na):
            la = oa[i + 1] - oa[i]
            if la == 0:
                continue
            for j in range(nb):
                lb = ob[j + 1] - ob[j]
                if lb == 0:
                    continue
                lcs = _lcs(pa + oa[i], la, pb + ob[j], lb, prev, cur)
                if lcs == 0:
                    continue
                recall = (<double> lcs) / (<double> la)
                precision = (<double> lcs) / (<double> lb)
                out_v[i, j] = 2.0 * precision * recall / (precision + recall)
    free(prev)
    free(cur)
    return out


def assign_points(X, C):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Xa = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Ca = np.ascontiguousarray(C, dtype=np.float64)
    cdef Py_ssize_t n = Xa.shape[0]
    cdef Py_ssize_t d = Xa.shape[1]
    cdef Py_ssize_t k = Ca.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] labels = np.zeros(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] best = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] Xv = Xa
    cdef double[:, ::1] Cv = Ca
    cdef long[::1] lv = labels
    cdef double[::1] bv = best
    cdef Py_ssize_t i, j, t
    cdef double acc, diff, cur_best
    cdef long cur_lab
    with nogil:
        for i in range(n):
            cur_best = -1.0
            cur_lab = 0
            for j in range(k):
                acc = 0.0
                for t in range(d):
                    diff = Xv[i, t] - Cv[j, t]
                    acc += diff * diff
                if cur_best < 0.0 or acc < cur_best:
                    cur_best = acc
                    cur_lab = j
            lv[i] = cur_lab
            bv[i] = cur_best
    return labels, best


def distance_rowsums(X):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Xa = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = Xa.shape[0]
    cdef Py_ssize_t d = Xa.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(n, dtype=np.float64)
    cdef double[:, ::1] Xv = Xa
    cdef double[::1] ov = out
    cdef Py_ssize_t i, j, t
    cdef double acc, diff, total
    with nogil:
        for i in range(n):
            total = 0.0
            for j in range(n):
                acc = 0.0
                for t in range(d):
                    diff = Xv[i, t] - Xv[j, t]
                    acc += diff * diff
                total += sqrt(acc)
            ov[i] = total
    return out
