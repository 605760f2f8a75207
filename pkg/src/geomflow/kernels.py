"""Backend selection for the pointwise kernels.

The compiled extension is used when it was built; ``GEOMFLOW_PURE_PYTHON=1``
forces the numpy fallback.
"""

import os

import numpy as np

from . import _kernels_py

_impl = _kernels_py
if os.environ.get("GEOMFLOW_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = _impl.BACKEND


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def sphere_sff(y, a, b):
    return _impl.sphere_sff(_c(y), _c(a), _c(b))


def sphere_sff_contract(y, a, b):
    return _impl.sphere_sff_contract(_c(y), _c(a), _c(b))


def sphere_sff_deriv(y, c, a, b):
    return _impl.sphere_sff_deriv(_c(y), _c(c), _c(a), _c(b))


def sphere_sff_deriv_contract(y, c, a, b):
    return _impl.sphere_sff_deriv_contract(_c(y), _c(c), _c(a), _c(b))


def normalize(u):
    return _impl.normalize(_c(u))


def ball_sums(values, order, cuts):
    return _impl.ball_sums(
        _c(values), np.ascontiguousarray(order, dtype=np.int64), np.ascontiguousarray(cuts, dtype=np.int64)
    )


def use_backend(name: str):
    """Switch backends at runtime (used by the benchmark and the parity tests)."""
    global _impl, BACKEND
    if name == "python":
        _impl = _kernels_py
    elif name == "cython":
        from . import _kernels

        _impl = _kernels
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = _impl.BACKEND
