"""Reverse-mode autodiff over dense float64 arrays.

A deliberately small engine: eager ops on ``Tensor`` values record their
backward closures onto an explicit ``Tape``, and ``Tape.backward`` replays the
records in reverse creation order (creation order is a topological order, so
the replay is exactly reverse-topological). Only the primitives the model
needs exist; there is no general broadcasting, control flow, or higher-order
support.

Ops run with or without an active tape. With no tape (plain inference) they
compute values and record nothing, so frozen-model scoring pays no graph
overhead.

Feature vectors live on the last axis. Most ops accept either a single vector
(rank 1) or a batch of vectors (rank 2, batch first); scalars are rank 0.
"""

from __future__ import annotations

import numpy as np

from . import kernels

_EPS_COSINE = 1e-12


class Tensor:
    """A float64 array plus an accumulated gradient of the same shape."""

    __slots__ = ("data", "grad")

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    def ensure_grad(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        return self.grad

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


class Parameter(Tensor):
    """A named trainable leaf. Its grad buffer persists across passes."""

    __slots__ = ("name",)

    def __init__(self, data, name):
        super().__init__(data)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.data.shape})"


def zero_grads(params):
    for p in params:
        p.zero_grad()


_ACTIVE_TAPE = None


class Tape:
    """Ordered record of primitive applications for one forward pass."""

    __slots__ = ("_records",)

    def __init__(self):
        self._records = []

    def __len__(self):
        return len(self._records)

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("a tape is already active; nesting is not supported")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def backward(self, loss):
        """Accumulate d(loss)/d(leaf) into .grad of every tensor reachable
        from ``loss``. Tensors that do not feed the loss are left untouched.
        """
        if loss.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
        loss.grad = np.ones_like(loss.data)
        for out, fn in reversed(self._records):
            if out.grad is not None:
                fn(out.grad)


def _record(out, backward_fn):
    if _ACTIVE_TAPE is not None:
        _ACTIVE_TAPE._records.append((out, backward_fn))
    return out


def _acc(t, g):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g, shape):
    """Sum ``g`` back down to ``shape`` (inverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def constant(value):
    """Wrap a plain array as a non-trainable Tensor."""
    return Tensor(value)


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b):
    out = Tensor(a.data + b.data)

    def backward(g):
        _acc(a, _unbroadcast(g, a.data.shape))
        _acc(b, _unbroadcast(g, b.data.shape))

    return _record(out, backward)


def sub(a, b):
    out = Tensor(a.data - b.data)

    def backward(g):
        _acc(a, _unbroadcast(g, a.data.shape))
        _acc(b, -_unbroadcast(g, b.data.shape))

    return _record(out, backward)


def mul(a, b):
    out = Tensor(a.data * b.data)

    def backward(g):
        _acc(a, _unbroadcast(g * b.data, a.data.shape))
        _acc(b, _unbroadcast(g * a.data, b.data.shape))

    return _record(out, backward)


def scale(a, c):
    c = float(c)
    out = Tensor(a.data * c)

    def backward(g):
        _acc(a, g * c)

    return _record(out, backward)


def one_minus(a):
    out = Tensor(1.0 - a.data)

    def backward(g):
        _acc(a, -g)

    return _record(out, backward)


def matmul(a, b):
    """Matrix/vector product on rank-1 or rank-2 operands.

    (B,n)@(n,m)->(B,m)   (n,)@(n,m)->(m,)   (B,n)@(n,)->(B,)   (n,)@(n,)->()
    """
    ad, bd = a.data, b.data
    if ad.ndim not in (1, 2) or bd.ndim not in (1, 2):
        raise ValueError(f"matmul supports rank 1 or 2, got {ad.ndim} and {bd.ndim}")
    if ad.shape[-1] != bd.shape[0]:
        raise ValueError(f"matmul inner dims differ: {ad.shape} @ {bd.shape}")
    out = Tensor(ad @ bd)

    def backward(g):
        if bd.ndim == 2:
            g2 = g[None, :] if ad.ndim == 1 else g
            a2 = ad[None, :] if ad.ndim == 1 else ad
            ga = g2 @ bd.T
            _acc(a, ga[0] if ad.ndim == 1 else ga)
            _acc(b, a2.T @ g2)
        else:
            if ad.ndim == 2:
                _acc(a, np.outer(g, bd))
                _acc(b, ad.T @ g)
            else:
                _acc(a, g * bd)
                _acc(b, g * ad)

    return _record(out, backward)


def concat(a, b):
    """Concatenate along the feature (last) axis."""
    n = a.data.shape[-1]
    out = Tensor(np.concatenate([a.data, b.data], axis=-1))

    def backward(g):
        _acc(a, g[..., :n])
        _acc(b, g[..., n:])

    return _record(out, backward)


def slice_last(a, start, stop):
    """View of the feature axis; gradient pads back with zeros."""
    out = Tensor(a.data[..., start:stop])

    def backward(g):
        full = np.zeros_like(a.data)
        full[..., start:stop] = g
        _acc(a, full)

    return _record(out, backward)


def pick(a, idx):
    """Per-row element: out[b] = a[b, idx[b]] for a (B, C) and idx (B,)."""
    idx = np.asarray(idx, dtype=np.int64)
    rows = np.arange(a.data.shape[0])
    out = Tensor(a.data[rows, idx])

    def backward(g):
        full = np.zeros_like(a.data)
        full[rows, idx] = g
        _acc(a, full)

    return _record(out, backward)


def sum_all(a):
    out = Tensor(a.data.sum())

    def backward(g):
        _acc(a, np.broadcast_to(g, a.data.shape).copy())

    return _record(out, backward)


def mean_all(a):
    n = a.data.size
    out = Tensor(a.data.sum() / n)

    def backward(g):
        _acc(a, np.broadcast_to(g / n, a.data.shape).copy())

    return _record(out, backward)


# ---------------------------------------------------------------------------
# nonlinearities


def _sigmoid_values(x):
    # exp of a non-positive argument only, so no overflow on either branch
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def sigmoid(a):
    y = _sigmoid_values(a.data)
    out = Tensor(y)

    def backward(g):
        _acc(a, g * y * (1.0 - y))

    return _record(out, backward)


def tanh(a):
    y = np.tanh(a.data)
    out = Tensor(y)

    def backward(g):
        _acc(a, g * (1.0 - y * y))

    return _record(out, backward)


def log(a):
    """Natural log; inputs must be strictly positive."""
    if np.any(a.data <= 0):
        raise ValueError("log needs strictly positive inputs")
    out = Tensor(np.log(a.data))

    def backward(g):
        _acc(a, g / a.data)

    return _record(out, backward)


def softmax(a):
    """Max-shifted softmax over the last axis (rank 1 or 2)."""
    x = a.data
    if x.ndim not in (1, 2):
        raise ValueError(f"softmax supports rank 1 or 2, got rank {x.ndim}")
    if x.shape[-1] == 0:
        raise ValueError("softmax of an empty vector")
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y)

    def backward(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        _acc(a, y * (g - dot))

    return _record(out, backward)


def stable_softmax(logits):
    """Softmax of a single logit vector."""
    if logits.data.ndim != 1:
        raise ValueError(f"stable_softmax expects a rank-1 tensor, got rank {logits.data.ndim}")
    if not np.all(np.isfinite(logits.data)):
        raise ValueError("stable_softmax requires finite logits")
    return softmax(logits)


# ---------------------------------------------------------------------------
# similarity


def cosine_sim(a, b):
    """Cosine similarity of two vectors, with the denominator floored at
    1e-12 so zero vectors map to similarity 0 instead of NaN."""
    if a.data.ndim != 1 or b.data.ndim != 1 or a.data.shape != b.data.shape:
        raise ValueError(f"cosine_sim expects equal-length vectors, got {a.data.shape} and {b.data.shape}")
    na = np.sqrt(a.data @ a.data)
    nb = np.sqrt(b.data @ b.data)
    dot = a.data @ b.data
    prod = na * nb
    denom = max(prod, _EPS_COSINE)
    c = dot / denom
    out = Tensor(c)

    def backward(g):
        g = float(g)
        if prod > _EPS_COSINE:
            _acc(a, g * (b.data / denom - c * a.data / (na * na)))
            _acc(b, g * (a.data / denom - c * b.data / (nb * nb)))
        else:
            _acc(a, g * b.data / denom)
            _acc(b, g * a.data / denom)

    return _record(out, backward)


def cosine_rows(z, u):
    """Pairwise cosine similarity between the rows of two matrices.

    z: (B, A) or (A,), u: (K, A) -> (B, K) or (K,). Denominators are floored
    at 1e-12, matching cosine_sim.
    """
    zd = z.data if z.data.ndim == 2 else z.data[None, :]
    ud = u.data
    dots = zd @ ud.T
    nz = np.sqrt((zd * zd).sum(axis=1))
    nu = np.sqrt((ud * ud).sum(axis=1))
    prod = nz[:, None] * nu[None, :]
    denom = np.maximum(prod, _EPS_COSINE)
    c = dots / denom
    out = Tensor(c if z.data.ndim == 2 else c[0])

    def backward(g):
        g2 = g if z.data.ndim == 2 else g[None, :]
        t = g2 / denom
        dz = t @ ud
        du = t.T @ zd
        # the normalization term only exists where the floor is inactive
        masked = np.where(prod > _EPS_COSINE, g2 * c, 0.0)
        row_num = masked.sum(axis=1)
        col_num = masked.sum(axis=0)
        row_fac = np.divide(row_num, nz * nz, out=np.zeros_like(row_num), where=nz > 0)
        col_fac = np.divide(col_num, nu * nu, out=np.zeros_like(col_num), where=nu > 0)
        dz -= row_fac[:, None] * zd
        du -= col_fac[:, None] * ud
        _acc(z, dz[0] if z.data.ndim == 1 else dz)
        _acc(u, du)

    return _record(out, backward)


# ---------------------------------------------------------------------------
# embedding-table ops (kernel-backed)


def rows(table, ids):
    """Gather rows of an embedding table: out[b] = table[ids[b]]."""
    ids = np.asarray(ids, dtype=np.int64)
    out = Tensor(table.data[ids])

    def backward(g):
        acc = table.ensure_grad()
        if ids.ndim == 0:
            acc[ids] += g
        else:
            kernels.scatter_add_rows(acc, ids, np.ascontiguousarray(g))

    return _record(out, backward)


def l1_distances(q, table, ids=None):
    """L1 distances from each query vector to table rows.

    q: (B, d) or (d,). With ids (B, C) only those rows are measured; with
    ids=None every table row is. Ties in the absolute value contribute zero
    subgradient.
    """
    qd = q.data if q.data.ndim == 2 else q.data[None, :]
    qd = np.ascontiguousarray(qd)
    td = np.ascontiguousarray(table.data)
    if ids is None:
        d = kernels.pairwise_l1(qd, td)
    else:
        ids = np.asarray(ids, dtype=np.int64)
        ids2 = np.ascontiguousarray(ids if ids.ndim == 2 else ids[None, :])
        d = kernels.gathered_l1(qd, td, ids2)
    out = Tensor(d if q.data.ndim == 2 else d[0])

    def backward(g):
        g2 = np.ascontiguousarray(g if q.data.ndim == 2 else g[None, :])
        dq = np.zeros_like(qd)
        dt = table.ensure_grad()
        if ids is None:
            kernels.pairwise_l1_backward(g2, qd, td, dq, dt)
        else:
            kernels.gathered_l1_backward(g2, qd, td, ids2, dq, dt)
        _acc(q, dq[0] if q.data.ndim == 1 else dq)

    return _record(out, backward)
