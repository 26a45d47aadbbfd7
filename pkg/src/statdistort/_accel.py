"""Optional numba acceleration.

Hot kernels are decorated with :func:`njit` from this module. When numba is
unavailable, or ``STATDISTORT_DISABLE_NUMBA`` is set to a non-empty value other
than ``0``, the decorator is a no-op and the kernels run as plain numpy/Python.
The flag is read once, at import time.
"""
import os

_flag = os.environ.get("STATDISTORT_DISABLE_NUMBA", "")
DISABLED_BY_ENV = _flag not in ("", "0")

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and not DISABLED_BY_ENV


def njit(*args, **kwargs):
    if USE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrapper(func):
        return func

    return wrapper


def backend():
    return "numba" if USE_NUMBA else "numpy"
