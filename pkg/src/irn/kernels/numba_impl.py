"""Numba-jitted implementations of the hot kernels.

Same signatures and semantics as ``numpy_impl``; plain loops so nothing
allocates per element and the table scan never builds a (B, K, d) temporary.
All kernels release the GIL so evaluation can fan out across threads.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def pairwise_l1(queries, table):
    b, d = queries.shape
    k = table.shape[0]
    out = np.empty((b, k), dtype=np.float64)
    for i in range(b):
        for j in range(k):
            acc = 0.0
            for c in range(d):
                acc += abs(queries[i, c] - table[j, c])
            out[i, j] = acc
    return out


@njit(cache=True, nogil=True)
def pairwise_l1_backward(grad, queries, table, d_queries, d_table):
    b, d = queries.shape
    k = table.shape[0]
    for i in range(b):
        for j in range(k):
            g = grad[i, j]
            if g == 0.0:
                continue
            for c in range(d):
                diff = queries[i, c] - table[j, c]
                s = 0.0
                if diff > 0.0:
                    s = 1.0
                elif diff < 0.0:
                    s = -1.0
                d_queries[i, c] += g * s
                d_table[j, c] -= g * s


@njit(cache=True, nogil=True)
def gathered_l1(queries, table, ids):
    b, d = queries.shape
    c_n = ids.shape[1]
    out = np.empty((b, c_n), dtype=np.float64)
    for i in range(b):
        for j in range(c_n):
            row = ids[i, j]
            acc = 0.0
            for c in range(d):
                acc += abs(queries[i, c] - table[row, c])
            out[i, j] = acc
    return out


@njit(cache=True, nogil=True)
def gathered_l1_backward(grad, queries, table, ids, d_queries, d_table):
    b, d = queries.shape
    c_n = ids.shape[1]
    for i in range(b):
        for j in range(c_n):
            g = grad[i, j]
            if g == 0.0:
                continue
            row = ids[i, j]
            for c in range(d):
                diff = queries[i, c] - table[row, c]
                s = 0.0
                if diff > 0.0:
                    s = 1.0
                elif diff < 0.0:
                    s = -1.0
                d_queries[i, c] += g * s
                d_table[row, c] -= g * s


@njit(cache=True, nogil=True)
def scatter_add_rows(acc, ids, rows):
    for i in range(ids.shape[0]):
        k = ids[i]
        for c in range(rows.shape[1]):
            acc[k, c] += rows[i, c]
