"""Optional numba acceleration.

Set ``LBLNAV_DISABLE_JIT=1`` to run every kernel as plain numpy. The jitted
dispatchers keep the original function reachable as ``kernel.py_func`` in
both modes, which the benchmark uses to time the two paths side by side.
"""

import os

_DISABLED = os.environ.get("LBLNAV_DISABLE_JIT", "0").strip().lower() in ("1", "true", "yes")

try:
    import numba
except ImportError:  # pragma: no cover - numba is optional
    numba = None

USE_NUMBA = numba is not None and not _DISABLED

JIT_OPTIONS = {"nogil": True, "cache": True}


def jit(func):
    """Compile ``func`` with numba when enabled, otherwise return it as is."""
    if USE_NUMBA:
        return numba.njit(**JIT_OPTIONS)(func)
    func.py_func = func
    return func
