"""Finite-difference verification of tape gradients.

``check_gradients`` takes a closure that rebuilds the forward pass from
scratch (so parameter perturbations flow through) and compares analytic
gradients against central differences, reporting the worst relative error
per parameter.
"""

from __future__ import annotations

import numpy as np

from .tape import Tape, zero_grads


def _relative_error(analytic, numeric):
    scale = max(abs(analytic), abs(numeric), 1.0)
    return abs(analytic - numeric) / scale


def check_gradients(loss_fn, params, step=1e-5, max_entries=None, rng=None):
    """Compare tape gradients of ``loss_fn()`` with central differences.

    loss_fn: zero-argument closure returning a scalar loss Tensor; it must
        read the current contents of ``params`` each call.
    params: sequence of Parameter leaves to perturb.
    step: central-difference half-width.
    max_entries: if set, check at most this many randomly chosen entries per
        parameter instead of all of them.
    rng: numpy Generator used to pick entries when max_entries is set.

    Returns {param_name: max relative error}. Raises if the loss or an
    analytic gradient is not finite, naming the offending parameter.
    """
    zero_grads(params)
    with Tape() as tape:
        loss = loss_fn()
        if loss.data.size != 1:
            raise ValueError(f"loss_fn must return a scalar, got shape {loss.data.shape}")
        if not np.isfinite(loss.data):
            raise FloatingPointError("loss is not finite")
        tape.backward(loss)

    analytic = {}
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise FloatingPointError(f"analytic gradient of {p.name!r} is not finite")
        analytic[p.name] = p.grad.copy()

    if max_entries is not None and rng is None:
        rng = np.random.default_rng(0)

    worst = {}
    for p in params:
        flat = p.data.reshape(-1)
        n = flat.size
        if max_entries is not None and n > max_entries:
            entries = rng.choice(n, size=max_entries, replace=False)
        else:
            entries = range(n)
        err = 0.0
        for i in entries:
            saved = flat[i]
            flat[i] = saved + step
            up = float(loss_fn().data)
            flat[i] = saved - step
            down = float(loss_fn().data)
            flat[i] = saved
            numeric = (up - down) / (2.0 * step)
            if not np.isfinite(numeric):
                raise FloatingPointError(f"finite difference of {p.name!r}[{i}] is not finite")
            err = max(err, _relative_error(analytic[p.name].reshape(-1)[i], numeric))
        worst[p.name] = err
    return worst
