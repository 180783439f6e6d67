"""Select the iteration-kernel backend at import time.

The compiled extension (mdes._speedups) is preferred; the NumPy module
(mdes._kernels_py) is the fallback.  Set MDES_BACKEND=python to force the
fallback, e.g. to benchmark one against the other.
"""
import os

from . import _kernels_py

_FORCED = os.environ.get("MDES_BACKEND", "").lower()

if _FORCED in ("", "compiled", "cython"):
    try:
        from . import _speedups as _impl

        BACKEND = "compiled"
    except ImportError:
        if _FORCED:
            raise
        _impl = _kernels_py
        BACKEND = "python"
elif _FORCED in ("python", "numpy"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    raise ValueError(f"unknown MDES_BACKEND {_FORCED!r}")

MAP_EUCLIDEAN = _kernels_py.MAP_EUCLIDEAN
MAP_QUADRATIC = _kernels_py.MAP_QUADRATIC
MAP_HYPENTROPY = _kernels_py.MAP_HYPENTROPY
RULE_GAP = _kernels_py.RULE_GAP
RULE_RISK = _kernels_py.RULE_RISK
RULE_NONE = _kernels_py.RULE_NONE
CODE_THRESHOLD = _kernels_py.CODE_THRESHOLD
CODE_BUDGET = _kernels_py.CODE_BUDGET
CODE_DIVERGED = _kernels_py.CODE_DIVERGED

run_dual_descent = _impl.run_dual_descent
run_kernel_descent = _impl.run_kernel_descent


def active_backend():
    """Name of the kernel implementation in use ("compiled" or "python")."""
    return BACKEND
