"""Compare the jitted and pure-NumPy hot kernels on realistic shapes.

Defaults mirror the ranking scan (a query chunk against a full entity
table) and the training step (per-query candidate sets plus the embedding
scatter-add). Run:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --table 15000 --dim 100
"""

import argparse
import timeit

import numpy as np

from irn.kernels import numpy_impl

try:
    from irn.kernels import numba_impl
except ImportError:
    numba_impl = None


def _cases(args, rng):
    b, k, d, c = args.batch, args.table, args.dim, args.candidates
    queries = rng.standard_normal((b, d))
    table = rng.standard_normal((k, d))
    ids = rng.integers(0, k, size=(b, c))
    grad_bk = rng.standard_normal((b, k))
    grad_bc = rng.standard_normal((b, c))
    rows = rng.standard_normal((b * c, d))
    flat_ids = ids.ravel()

    def fresh():
        return np.zeros((b, d)), np.zeros((k, d))

    return [
        ("pairwise_l1", lambda impl: impl.pairwise_l1(queries, table)),
        ("pairwise_l1_backward",
         lambda impl: impl.pairwise_l1_backward(grad_bk, queries, table, *fresh())),
        ("gathered_l1", lambda impl: impl.gathered_l1(queries, table, ids)),
        ("gathered_l1_backward",
         lambda impl: impl.gathered_l1_backward(grad_bc, queries, table, ids, *fresh())),
        ("scatter_add_rows",
         lambda impl: impl.scatter_add_rows(np.zeros((k, d)), flat_ids, rows)),
    ]


def _check_agreement(call):
    a = call(numpy_impl)
    b = call(numba_impl)
    if a is None or b is None:   # backward kernels write in place and return None
        return 0.0
    return float(np.max(np.abs(a - b)))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--batch", type=int, default=64, help="query rows per chunk")
    parser.add_argument("--table", type=int, default=15000, help="entity table rows")
    parser.add_argument("--dim", type=int, default=100, help="embedding width")
    parser.add_argument("--candidates", type=int, default=21, help="candidates per query")
    parser.add_argument("--repeats", type=int, default=5, help="timing repeats (best is kept)")
    parser.add_argument("--number", type=int, default=3, help="calls per timing repeat")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    cases = _cases(args, rng)

    if numba_impl is None:
        print("numba is not importable; timing the NumPy kernels only")
    else:
        for name, call in cases:
            call(numba_impl)   # compile outside the timed region
            diff = _check_agreement(call)
            if diff > 1e-9:
                raise AssertionError(f"{name}: backends disagree by {diff:.3e}")

    header = f"{'kernel':24s} {'numpy ms':>10s}"
    if numba_impl is not None:
        header += f" {'numba ms':>10s} {'speedup':>8s}"
    print(f"shapes: batch={args.batch} table={args.table} dim={args.dim} candidates={args.candidates}")
    print(header)
    for name, call in cases:
        t_np = min(timeit.repeat(lambda: call(numpy_impl), number=args.number, repeat=args.repeats))
        line = f"{name:24s} {1e3 * t_np / args.number:10.3f}"
        if numba_impl is not None:
            t_nb = min(timeit.repeat(lambda: call(numba_impl), number=args.number, repeat=args.repeats))
            line += f" {1e3 * t_nb / args.number:10.3f} {t_np / t_nb:7.2f}x"
        print(line)


if __name__ == "__main__":
    main()
