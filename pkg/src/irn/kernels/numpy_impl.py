"""Pure-NumPy implementations of the hot kernels.

These are the reference versions: every function here has a jitted twin in
``numba_impl`` with identical semantics. Batch loops are kept explicit where
full vectorization would materialize a (batch, table, dim) temporary.
"""

import numpy as np


def pairwise_l1(queries, table):
    """L1 distance from every query row to every table row.

    queries: (B, d), table: (K, d) -> (B, K)
    """
    b = queries.shape[0]
    out = np.empty((b, table.shape[0]), dtype=np.float64)
    for i in range(b):
        np.sum(np.abs(table - queries[i]), axis=1, out=out[i])
    return out


def pairwise_l1_backward(grad, queries, table, d_queries, d_table):
    """Accumulate gradients of pairwise_l1 into d_queries and d_table."""
    for i in range(queries.shape[0]):
        s = np.sign(queries[i] - table)            # (K, d)
        g = grad[i][:, None] * s
        d_queries[i] += g.sum(axis=0)
        d_table -= g


def gathered_l1(queries, table, ids):
    """L1 distance from each query row to its own candidate rows.

    queries: (B, d), table: (K, d), ids: (B, C) int64 -> (B, C)
    """
    rows = table[ids]                              # (B, C, d)
    return np.sum(np.abs(queries[:, None, :] - rows), axis=2)


def gathered_l1_backward(grad, queries, table, ids, d_queries, d_table):
    """Accumulate gradients of gathered_l1 into d_queries and d_table."""
    rows = table[ids]
    s = np.sign(queries[:, None, :] - rows)        # (B, C, d)
    g = grad[:, :, None] * s
    d_queries += g.sum(axis=1)
    dim = table.shape[1]
    np.add.at(d_table, ids.ravel(), -g.reshape(-1, dim))


def scatter_add_rows(acc, ids, rows):
    """acc[ids[i]] += rows[i], with repeated ids accumulating."""
    np.add.at(acc, ids, rows)
