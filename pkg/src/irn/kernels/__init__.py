"""Hot-kernel dispatch.

The distance scans and embedding scatter-adds dominate training and ranking
time, so they get jitted versions. The backend is picked once at import:

  IRN_BACKEND=numba   require the jitted kernels (error if numba is missing)
  IRN_BACKEND=numpy   force the pure-NumPy fallback
  unset / auto        numba when importable, NumPy otherwise

``benchmarks/bench_kernels.py`` compares the two paths on realistic shapes.
"""

import os

from . import numpy_impl

_choice = os.environ.get("IRN_BACKEND", "auto").lower()
if _choice not in ("auto", "numba", "numpy"):
    raise RuntimeError(f"IRN_BACKEND must be 'numba', 'numpy' or 'auto', got {_choice!r}")

if _choice == "numpy":
    _impl = numpy_impl
    BACKEND = "numpy"
else:
    try:
        from . import numba_impl as _impl
        BACKEND = "numba"
    except ImportError:
        if _choice == "numba":
            raise RuntimeError("IRN_BACKEND=numba but numba is not importable")
        _impl = numpy_impl
        BACKEND = "numpy"

pairwise_l1 = _impl.pairwise_l1
pairwise_l1_backward = _impl.pairwise_l1_backward
gathered_l1 = _impl.gathered_l1
gathered_l1_backward = _impl.gathered_l1_backward
scatter_add_rows = _impl.scatter_add_rows
