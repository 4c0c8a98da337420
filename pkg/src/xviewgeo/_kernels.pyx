# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops mirroring ``_pykernels``.

The enumeration is bit-identical to the fallback. Replicator states agree
to round-off only: the fallback's matrix-vector product sums in a
different order.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

# coordinates below this are set to zero; subnormal arithmetic is ~100x slower
DEF FLUSH = 1e-300


cdef inline double _rowdot(const double* a, const double* x, Py_ssize_t n) nogil:
    # four partial sums: breaks the add dependency chain
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0
    cdef Py_ssize_t j = 0
    while j + 4 <= n:
        s0 += a[j] * x[j]
        s1 += a[j + 1] * x[j + 1]
        s2 += a[j + 2] * x[j + 2]
        s3 += a[j + 3] * x[j + 3]
        j += 4
    while j < n:
        s0 += a[j] * x[j]
        j += 1
    return (s0 + s1) + (s2 + s3)


def replicator_run(const double[:, ::1] A, const double[::1] x0, long max_iter,
                   double tol, bint trace, double support_eps=1e-4):
    """Iterate x_i <- x_i (Ax)_i / x'Ax from ``x0``.

    Returns (x, steps, converged, payoffs, sizes, max_sum_dev, zero_payoff).
    With ``trace`` set, ``payoffs`` and ``sizes`` hold x'Ax and the number of
    coordinates above ``support_eps`` for every visited state.
    """
    cdef Py_ssize_t n = A.shape[0]
    cdef Py_ssize_t i, j
    cdef long it, steps = 0
    cdef double p, acc, diff, total, dev, max_dev = 0.0
    cdef bint converged = False, zero = False
    x_arr = np.array(x0, dtype=np.float64, copy=True)
    ax_arr = np.empty(n, dtype=np.float64)
    xn_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] x = x_arr
    cdef double[::1] ax = ax_arr
    cdef double[::1] xn = xn_arr
    cdef double[::1] tr
    cdef cnp.intp_t[::1] sz
    cdef cnp.intp_t cnt
    payoffs = sizes = None
    if trace:
        payoffs = np.empty(max_iter + 1, dtype=np.float64)
        sizes = np.empty(max_iter + 1, dtype=np.intp)
        tr = payoffs
        sz = sizes

    for it in range(max_iter + 1):
        p = 0.0
        for i in range(n):
            acc = _rowdot(&A[i, 0], &x[0], n)
            ax[i] = acc
            p += x[i] * acc
        if trace:
            tr[it] = p
            cnt = 0
            for i in range(n):
                if x[i] > support_eps:
                    cnt += 1
            sz[it] = cnt
        if it == max_iter:
            break
        if p <= 0.0:
            zero = True
            break
        diff = 0.0
        total = 0.0
        for i in range(n):
            xn[i] = x[i] * ax[i] / p
            if xn[i] < FLUSH:
                xn[i] = 0.0
            diff += fabs(xn[i] - x[i])
            total += xn[i]
        for i in range(n):
            x[i] = xn[i]
        steps += 1
        dev = fabs(total - 1.0)
        if dev > max_dev:
            max_dev = dev
        if diff < tol:
            converged = True
            # payoff of the final state
            if trace:
                p = 0.0
                cnt = 0
                for i in range(n):
                    acc = _rowdot(&A[i, 0], &x[0], n)
                    p += x[i] * acc
                    if x[i] > support_eps:
                        cnt += 1
                tr[it + 1] = p
                sz[it + 1] = cnt
            break
    if trace:
        payoffs = payoffs[:steps + 1]
        sizes = sizes[:steps + 1]
    return x_arr, steps, converged, payoffs, sizes, max_dev, zero


def gmcp_enumerate(const double[:, ::1] A, const cnp.intp_t[::1] offsets,
                   const cnp.intp_t[::1] nodes):
    """Exhaustive one-node-per-cluster search maximizing summed pair weights.

    Clusters are ``nodes[offsets[c]:offsets[c+1]]``. Enumeration is
    lexicographic; the first maximum wins ties. Returns (choice, best, count)
    where ``choice[c]`` is the position within cluster ``c``.
    """
    cdef Py_ssize_t nc = offsets.shape[0] - 1
    cdef Py_ssize_t depth, c, node
    cdef double acc, best = -1.0e308
    cdef long long count = 0
    idx_arr = np.full(nc, -1, dtype=np.intp)
    chosen_arr = np.zeros(nc, dtype=np.intp)
    partial_arr = np.zeros(nc + 1, dtype=np.float64)
    best_arr = np.zeros(nc, dtype=np.intp)
    cdef cnp.intp_t[::1] idx = idx_arr
    cdef cnp.intp_t[::1] chosen = chosen_arr
    cdef double[::1] partial = partial_arr
    cdef cnp.intp_t[::1] bsel = best_arr

    depth = 0
    while depth >= 0:
        idx[depth] += 1
        if idx[depth] >= offsets[depth + 1] - offsets[depth]:
            idx[depth] = -1
            depth -= 1
            continue
        node = nodes[offsets[depth] + idx[depth]]
        acc = partial[depth]
        for c in range(depth):
            acc += A[chosen[c], node]
        chosen[depth] = node
        partial[depth + 1] = acc
        if depth == nc - 1:
            count += 1
            if acc > best:
                best = acc
                for c in range(nc):
                    bsel[c] = idx[c]
        else:
            depth += 1
    return best_arr, best, count
