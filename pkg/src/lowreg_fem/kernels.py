"""Kernel backend selection.

The compiled extension is used when it imports; setting ``LOWREG_FEM_PURE=1``
forces the numpy fallback.  ``BACKEND`` names the active implementation.
"""
import os

import numpy as np

from . import _kernels_py

_compiled = None
if os.environ.get("LOWREG_FEM_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "numpy"
_impl = _compiled if _compiled is not None else _kernels_py

_threads = 1


def set_num_threads(n):
    global _threads
    _threads = max(1, int(n))


def get_num_threads():
    return _threads


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def pair_sums(X, Y, GX, GY, w, power, backend=None):
    impl = _select(backend)
    return impl.pair_sums(_c(X), _c(Y), _c(GX), _c(GY), _c(w), float(power), _threads)


def weighted_sq_sums(A, B, w, backend=None):
    impl = _select(backend)
    A, B = _c(A), _c(B)
    if A.ndim == 2:
        A, B = A[..., None], B[..., None]
    return impl.weighted_sq_sums(A, B, _c(w), _threads)


def _select(backend):
    if backend is None:
        return _impl
    if backend == "numpy":
        return _kernels_py
    if backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available")
        return _compiled
    raise ValueError(f"unknown backend {backend!r}")
