# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Native kernels: per-row heterogeneous distances plus the full ball-tree
traversal. The tree walker and the brute-force scan share one inline row
routine, so their distances are bitwise identical.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()

cdef double NUMERIC_CAP = 6.0
cdef double NUMERIC_PENALTY_SQ = 9.0
cdef double BOOLEAN_PENALTY_SQ = 0.25
cdef double CATEGORICAL_CAP_SQ = 4.0
cdef double CATEGORICAL_PENALTY_SQ = 1.0
cdef double INF = float("inf")


def ref_sq_distances(double[:, ::1] num, unsigned char[:, ::1] num_miss,
                     unsigned char[:, ::1] boo, unsigned char[:, ::1] boo_miss,
                     int[:, ::1] cat, double[:, ::1] emb,
                     Py_ssize_t row, long long[::1] rows, double[::1] out):
    """Squared all-field unit-weight distance from record ``row`` to ``rows``."""
    cdef Py_ssize_t m = rows.shape[0]
    cdef Py_ssize_t fn = num.shape[1]
    cdef Py_ssize_t fb = boo.shape[1]
    cdef Py_ssize_t fc = cat.shape[1]
    cdef Py_ssize_t dim = emb.shape[1]
    cdef Py_ssize_t i, f, d, r
    cdef int ia, ib
    cdef double acc, dd, s, diff
    cdef bint am, bm

    with nogil:
        for i in range(m):
            r = <Py_ssize_t> rows[i]
            acc = 0.0
            for f in range(fn):
                am = num_miss[row, f] != 0
                bm = num_miss[r, f] != 0
                if am and bm:
                    continue
                if am or bm:
                    acc += NUMERIC_PENALTY_SQ
                    continue
                dd = fabs(num[row, f] - num[r, f])
                if dd > NUMERIC_CAP:
                    dd = NUMERIC_CAP
                acc += dd * dd
            for f in range(fb):
                am = boo_miss[row, f] != 0
                bm = boo_miss[r, f] != 0
                if am and bm:
                    continue
                if am or bm:
                    acc += BOOLEAN_PENALTY_SQ
                    continue
                if boo[row, f] != boo[r, f]:
                    acc += 1.0
            for f in range(fc):
                ia = cat[row, f]
                ib = cat[r, f]
                if ia < 0 and ib < 0:
                    continue
                if ia < 0 or ib < 0:
                    acc += CATEGORICAL_PENALTY_SQ
                    continue
                if ia == ib:
                    continue
                s = 0.0
                for d in range(dim):
                    diff = emb[ia, d] - emb[ib, d]
                    s += diff * diff
                if s > CATEGORICAL_CAP_SQ:
                    s = CATEGORICAL_CAP_SQ
                acc += s
            out[i] = acc


cdef inline double _row_sq(double[:, ::1] num, unsigned char[:, ::1] num_miss,
                           unsigned char[:, ::1] boo, unsigned char[:, ::1] boo_miss,
                           int[:, ::1] cat, double[:, ::1] emb,
                           int[::1] qn_cols, double[::1] qn_vals,
                           unsigned char[::1] qn_miss, double[::1] qn_w,
                           int[::1] qb_cols, unsigned char[::1] qb_vals,
                           unsigned char[::1] qb_miss, double[::1] qb_w,
                           int[::1] qc_cols, double[:, ::1] qc_vecs,
                           unsigned char[::1] qc_miss, double[::1] qc_w,
                           Py_ssize_t r) noexcept nogil:
    cdef Py_ssize_t qn = qn_cols.shape[0]
    cdef Py_ssize_t qb = qb_cols.shape[0]
    cdef Py_ssize_t qc = qc_cols.shape[0]
    cdef Py_ssize_t dim = emb.shape[1]
    cdef Py_ssize_t j, d
    cdef int col, ib
    cdef double acc = 0.0
    cdef double dd, s, diff
    cdef bint qm, rm

    for j in range(qn):
        col = qn_cols[j]
        qm = qn_miss[j] != 0
        rm = num_miss[r, col] != 0
        if qm and rm:
            continue
        if qm or rm:
            acc += qn_w[j] * NUMERIC_PENALTY_SQ
            continue
        dd = fabs(num[r, col] - qn_vals[j])
        if dd > NUMERIC_CAP:
            dd = NUMERIC_CAP
        acc += qn_w[j] * dd * dd
    for j in range(qb):
        col = qb_cols[j]
        qm = qb_miss[j] != 0
        rm = boo_miss[r, col] != 0
        if qm and rm:
            continue
        if qm or rm:
            acc += qb_w[j] * BOOLEAN_PENALTY_SQ
            continue
        if boo[r, col] != qb_vals[j]:
            acc += qb_w[j]
    for j in range(qc):
        col = qc_cols[j]
        ib = cat[r, col]
        qm = qc_miss[j] != 0
        if qm and ib < 0:
            continue
        if qm or ib < 0:
            acc += qc_w[j] * CATEGORICAL_PENALTY_SQ
            continue
        s = 0.0
        for d in range(dim):
            diff = emb[ib, d] - qc_vecs[j, d]
            s += diff * diff
        if s > CATEGORICAL_CAP_SQ:
            s = CATEGORICAL_CAP_SQ
        acc += qc_w[j] * s
    return acc


def query_sq_distances(double[:, ::1] num, unsigned char[:, ::1] num_miss,
                       unsigned char[:, ::1] boo, unsigned char[:, ::1] boo_miss,
                       int[:, ::1] cat, double[:, ::1] emb,
                       int[::1] qn_cols, double[::1] qn_vals,
                       unsigned char[::1] qn_miss, double[::1] qn_w,
                       int[::1] qb_cols, unsigned char[::1] qb_vals,
                       unsigned char[::1] qb_miss, double[::1] qb_w,
                       int[::1] qc_cols, double[:, ::1] qc_vecs,
                       unsigned char[::1] qc_miss, double[::1] qc_w,
                       long long[::1] rows, double[::1] out):
    """Squared weighted distance from a packed query to each of ``rows``."""
    cdef Py_ssize_t m = rows.shape[0]
    cdef Py_ssize_t i
    with nogil:
        for i in range(m):
            out[i] = _row_sq(num, num_miss, boo, boo_miss, cat, emb,
                             qn_cols, qn_vals, qn_miss, qn_w,
                             qb_cols, qb_vals, qb_miss, qb_w,
                             qc_cols, qc_vecs, qc_miss, qc_w,
                             <Py_ssize_t> rows[i])


cdef inline bint _worse(double d1, long long i1, double d2, long long i2) noexcept nogil:
    # lexicographic (distance, id): True when the first is strictly worse
    if d1 != d2:
        return d1 > d2
    return i1 > i2


cdef inline void _sift_down(double[::1] hd, long long[::1] hi,
                            Py_ssize_t length, Py_ssize_t pos) noexcept nogil:
    cdef Py_ssize_t child
    cdef double td
    cdef long long ti
    while True:
        child = 2 * pos + 1
        if child >= length:
            return
        if child + 1 < length and _worse(hd[child + 1], hi[child + 1],
                                         hd[child], hi[child]):
            child += 1
        if _worse(hd[child], hi[child], hd[pos], hi[pos]):
            td = hd[pos]; hd[pos] = hd[child]; hd[child] = td
            ti = hi[pos]; hi[pos] = hi[child]; hi[child] = ti
            pos = child
        else:
            return


cdef inline void _sift_up(double[::1] hd, long long[::1] hi,
                          Py_ssize_t pos) noexcept nogil:
    cdef Py_ssize_t parent
    cdef double td
    cdef long long ti
    while pos > 0:
        parent = (pos - 1) >> 1
        if _worse(hd[pos], hi[pos], hd[parent], hi[parent]):
            td = hd[pos]; hd[pos] = hd[parent]; hd[parent] = td
            ti = hi[pos]; hi[pos] = hi[parent]; hi[parent] = ti
            pos = parent
        else:
            return


cdef inline long long _eval_row(double[:, ::1] num, unsigned char[:, ::1] num_miss,
                                unsigned char[:, ::1] boo, unsigned char[:, ::1] boo_miss,
                                int[:, ::1] cat, double[:, ::1] emb,
                                int[::1] qn_cols, double[::1] qn_vals,
                                unsigned char[::1] qn_miss, double[::1] qn_w,
                                int[::1] qb_cols, unsigned char[::1] qb_vals,
                                unsigned char[::1] qb_miss, double[::1] qb_w,
                                int[::1] qc_cols, double[:, ::1] qc_vecs,
                                unsigned char[::1] qc_miss, double[::1] qc_w,
                                unsigned char[::1] seen, double[::1] cache,
                                double[::1] heap_d, long long[::1] heap_i,
                                Py_ssize_t* heap_len, Py_ssize_t k,
                                long long[::1] ids, Py_ssize_t r) noexcept nogil:
    """Memoized evaluation of one record: cache its distance, offer to heap."""
    cdef double dist
    if seen[r]:
        return 0
    dist = sqrt(_row_sq(num, num_miss, boo, boo_miss, cat, emb,
                        qn_cols, qn_vals, qn_miss, qn_w,
                        qb_cols, qb_vals, qb_miss, qb_w,
                        qc_cols, qc_vecs, qc_miss, qc_w, r))
    seen[r] = 1
    cache[r] = dist
    if heap_len[0] < k:
        heap_d[heap_len[0]] = dist
        heap_i[heap_len[0]] = ids[r]
        heap_len[0] += 1
        _sift_up(heap_d, heap_i, heap_len[0] - 1)
    elif _worse(heap_d[0], heap_i[0], dist, ids[r]):
        heap_d[0] = dist
        heap_i[0] = ids[r]
        _sift_down(heap_d, heap_i, heap_len[0], 0)
    return 1


def tree_knn(double[:, ::1] num, unsigned char[:, ::1] num_miss,
             unsigned char[:, ::1] boo, unsigned char[:, ::1] boo_miss,
             int[:, ::1] cat, double[:, ::1] emb,
             int[::1] qn_cols, double[::1] qn_vals,
             unsigned char[::1] qn_miss, double[::1] qn_w,
             int[::1] qb_cols, unsigned char[::1] qb_vals,
             unsigned char[::1] qb_miss, double[::1] qb_w,
             int[::1] qc_cols, double[:, ::1] qc_vecs,
             unsigned char[::1] qc_miss, double[::1] qc_w,
             long long[::1] node_pivot, double[::1] node_radius,
             int[::1] node_left, int[::1] node_right,
             int[::1] leaf_start, int[::1] leaf_end, long long[::1] leaf_rows,
             long long[::1] ids, double s_bound, double slack, Py_ssize_t k,
             long long[::1] stats_out):
    """Exact top-k traversal: depth-first, nearer-pivot child first, pruning
    against a (distance, id) max-heap of the best k seen so far. Same visit
    order, memoization, and tie handling as the Python walker.

    Returns (distances, ids) unsorted; stats_out receives
    [evaluated, visited, pruned].
    """
    cdef Py_ssize_t n = ids.shape[0]
    cdef Py_ssize_t n_nodes = node_pivot.shape[0]

    seen_arr = np.zeros(n, dtype=np.uint8)
    cache_arr = np.zeros(n, dtype=np.float64)
    heap_d_arr = np.empty(k, dtype=np.float64)
    heap_i_arr = np.empty(k, dtype=np.int64)
    stack_arr = np.empty(n_nodes + 1, dtype=np.int64)
    cdef unsigned char[::1] seen = seen_arr
    cdef double[::1] cache = cache_arr
    cdef double[::1] heap_d = heap_d_arr
    cdef long long[::1] heap_i = heap_i_arr
    cdef long long[::1] stack = stack_arr

    cdef Py_ssize_t heap_len = 0
    cdef Py_ssize_t sp = 0
    cdef long long evaluated = 0, visited = 0, pruned = 0
    cdef Py_ssize_t node, lc, rc, lp, rp, pivot, idx
    cdef double worst

    with nogil:
        evaluated += _eval_row(num, num_miss, boo, boo_miss, cat, emb,
                               qn_cols, qn_vals, qn_miss, qn_w,
                               qb_cols, qb_vals, qb_miss, qb_w,
                               qc_cols, qc_vecs, qc_miss, qc_w,
                               seen, cache, heap_d, heap_i, &heap_len, k, ids,
                               <Py_ssize_t> node_pivot[0])
        stack[0] = 0
        sp = 1
        while sp > 0:
            sp -= 1
            node = <Py_ssize_t> stack[sp]
            visited += 1
            worst = INF if heap_len < k else heap_d[0]
            pivot = <Py_ssize_t> node_pivot[node]
            if cache[pivot] - s_bound * node_radius[node] > worst + slack:
                pruned += 1
                continue
            lc = <Py_ssize_t> node_left[node]
            if lc < 0:
                for idx in range(leaf_start[node], leaf_end[node]):
                    evaluated += _eval_row(num, num_miss, boo, boo_miss, cat, emb,
                                           qn_cols, qn_vals, qn_miss, qn_w,
                                           qb_cols, qb_vals, qb_miss, qb_w,
                                           qc_cols, qc_vecs, qc_miss, qc_w,
                                           seen, cache, heap_d, heap_i,
                                           &heap_len, k, ids,
                                           <Py_ssize_t> leaf_rows[idx])
                continue
            rc = <Py_ssize_t> node_right[node]
            lp = <Py_ssize_t> node_pivot[lc]
            rp = <Py_ssize_t> node_pivot[rc]
            evaluated += _eval_row(num, num_miss, boo, boo_miss, cat, emb,
                                   qn_cols, qn_vals, qn_miss, qn_w,
                                   qb_cols, qb_vals, qb_miss, qb_w,
                                   qc_cols, qc_vecs, qc_miss, qc_w,
                                   seen, cache, heap_d, heap_i, &heap_len, k,
                                   ids, lp)
            evaluated += _eval_row(num, num_miss, boo, boo_miss, cat, emb,
                                   qn_cols, qn_vals, qn_miss, qn_w,
                                   qb_cols, qb_vals, qb_miss, qb_w,
                                   qc_cols, qc_vecs, qc_miss, qc_w,
                                   seen, cache, heap_d, heap_i, &heap_len, k,
                                   ids, rp)
            if cache[lp] <= cache[rp]:
                stack[sp] = rc
                stack[sp + 1] = lc
            else:
                stack[sp] = lc
                stack[sp + 1] = rc
            sp += 2

    stats_out[0] = evaluated
    stats_out[1] = visited
    stats_out[2] = pruned
    return heap_d_arr[:heap_len], heap_i_arr[:heap_len]
