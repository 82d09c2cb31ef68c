# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled 1-D nearest-neighbour search on a sorted reference set.

The reference scores must be sorted ascending with ties ordered by original
index.  Equal-distance candidates are taken in ascending original index.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, fabs

cnp.import_array()


cdef inline Py_ssize_t _bisect_left(const double[::1] a, double x) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = a.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


def knn_sorted(const double[::1] query, const double[::1] ref_scores,
               const long long[::1] ref_index, Py_ssize_t k):
    """Return ``(neighbors, distances)``, each of shape (len(query), min(k, m))."""
    cdef Py_ssize_t nq = query.shape[0], m = ref_scores.shape[0]
    cdef Py_ssize_t kk = k if k < m else m
    neighbors_arr = np.empty((nq, kk), dtype=np.int64)
    distances_arr = np.empty((nq, kk), dtype=np.float64)
    if nq == 0 or kk == 0:
        return neighbors_arr, distances_arr
    cdef long long[:, ::1] nb = neighbors_arr
    cdef double[:, ::1] ds = distances_arr

    # run_lo[j] / run_hi[j]: first and last position of j's equal-score run
    run_lo_arr = np.empty(m, dtype=np.intp)
    run_hi_arr = np.empty(m, dtype=np.intp)
    cdef Py_ssize_t[::1] run_lo = run_lo_arr
    cdef Py_ssize_t[::1] run_hi = run_hi_arr
    cdef Py_ssize_t j, q, L, R, filled, need, a_pos, a_end, b_pos, b_end
    cdef double s, dl, dr, d
    cdef bint take_left, take_right

    with nogil:
        run_lo[0] = 0
        for j in range(1, m):
            run_lo[j] = run_lo[j - 1] if ref_scores[j] == ref_scores[j - 1] else j
        run_hi[m - 1] = m - 1
        for j in range(m - 2, -1, -1):
            run_hi[j] = run_hi[j + 1] if ref_scores[j] == ref_scores[j + 1] else j

        for q in range(nq):
            s = query[q]
            R = _bisect_left(ref_scores, s)
            L = R - 1
            filled = 0
            while filled < kk:
                dl = fabs(s - ref_scores[L]) if L >= 0 else INFINITY
                dr = fabs(s - ref_scores[R]) if R < m else INFINITY
                d = dl if dl < dr else dr
                take_left = L >= 0 and dl == d
                take_right = R < m and dr == d
                # merge the two ascending-index runs at distance d
                a_pos = run_lo[L] if take_left else 0
                a_end = L + 1 if take_left else 0
                b_pos = R if take_right else 0
                b_end = run_hi[R] + 1 if take_right else 0
                need = kk - filled
                while need > 0 and (a_pos < a_end or b_pos < b_end):
                    if b_pos >= b_end or (a_pos < a_end and ref_index[a_pos] < ref_index[b_pos]):
                        nb[q, filled] = ref_index[a_pos]
                        a_pos += 1
                    else:
                        nb[q, filled] = ref_index[b_pos]
                        b_pos += 1
                    ds[q, filled] = d
                    filled += 1
                    need -= 1
                if take_left:
                    L = run_lo[L] - 1
                if take_right:
                    R = run_hi[R] + 1
    return neighbors_arr, distances_arr
