"""Kernel backend selection.

Two implementations of the inner-loop kernels exist:
  * "compiled"  — Cython extension (gaussflow._accel)
  * "numpy"     — pure-numpy fallback (gaussflow._kernels_np)

Both expose make_context / eval_rhs / eval_diag / residual_values /
DiagOut / RK4_REAL_AXIS with identical semantics; within one backend
results are bit-reproducible, across backends they agree to rounding.

Selection: GAUSSFLOW_BACKEND = auto (default) | compiled | numpy.
"""
from __future__ import annotations

import os

from . import _kernels_np

_cached = None


def available_backends():
    names = ["numpy"]
    try:
        from . import _accel  # noqa: F401
        names.insert(0, "compiled")
    except ImportError:
        pass
    return names


def select_backend(name=None):
    """Return (name, kernels module); name None reads GAUSSFLOW_BACKEND."""
    if name is None:
        name = os.environ.get("GAUSSFLOW_BACKEND", "auto").strip().lower()
    if name in ("numpy", "fallback", "python"):
        return "numpy", _kernels_np
    if name in ("compiled", "accel", "cython"):
        from . import _accel
        return "compiled", _accel
    if name != "auto":
        raise ValueError("unknown backend %r (auto|compiled|numpy)" % name)
    try:
        from . import _accel
        return "compiled", _accel
    except ImportError:
        return "numpy", _kernels_np


def get_kernels():
    """Process-wide backend, resolved once (env var read at first use)."""
    global _cached
    if _cached is None:
        _cached = select_backend()
    return _cached
