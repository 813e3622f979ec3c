"""Numba switch.

Set ``CALIBSENS_DISABLE_NUMBA=1`` to force the pure-numpy kernels. The flag
is read once at import time.
"""

import os

_FLAG = os.environ.get("CALIBSENS_DISABLE_NUMBA", "").strip().lower()
DISABLED_BY_ENV = _FLAG in {"1", "true", "yes", "on"}

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not DISABLED_BY_ENV


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged.

    The undecorated function stays reachable as ``.py_func`` either way so
    tests can run the loop implementation in plain Python.
    """
    if not HAVE_NUMBA:
        func.py_func = func
        return func
    return numba.njit(cache=True, nogil=True)(func)
