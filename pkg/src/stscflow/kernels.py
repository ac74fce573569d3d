"""Splatting backend selection.

The compiled extension is used when it was built; otherwise the numpy
implementation takes over. Set ``STSCFLOW_PURE_PYTHON=1`` to force the
fallback.
"""

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("STSCFLOW_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py


def _prep(qx, qy, w, b, k0, wk):
    return (
        np.ascontiguousarray(qx, dtype=np.float64),
        np.ascontiguousarray(qy, dtype=np.float64),
        np.ascontiguousarray(w, dtype=np.float64),
        np.ascontiguousarray(b, dtype=np.int64),
        np.ascontiguousarray(k0, dtype=np.int64),
        np.ascontiguousarray(wk, dtype=np.float64),
    )


def splat(shape, qx, qy, w, b, k0, wk, backend=None):
    """Splat events into a new zero volume of ``shape`` = (B, K, H, W)."""
    impl = _pick(backend)
    out = np.zeros(shape, dtype=np.float64)
    impl.splat(out, *_prep(qx, qy, w, b, k0, wk))
    return out


def splat_grad(grad, qx, qy, w, b, k0, wk, backend=None):
    impl = _pick(backend)
    grad = np.ascontiguousarray(grad, dtype=np.float64)
    return impl.splat_grad(grad, *_prep(qx, qy, w, b, k0, wk))


def _pick(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _kernels_py
    if backend == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {backend!r}")
