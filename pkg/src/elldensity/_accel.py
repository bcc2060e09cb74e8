"""Optional numba acceleration.

Set ``ELLDENSITY_NUMBA=0`` to force the pure Python/numpy code paths.  The
flag is read once at import time; kernels decorated with :func:`kernel` are
then either compiled with ``njit(cache=True, nogil=True)`` or left as plain
Python functions with identical semantics.
"""
import os

_flag = os.environ.get("ELLDENSITY_NUMBA", "1").strip().lower()
_wanted = _flag not in ("0", "false", "no", "off")

try:
    if not _wanted:
        raise ImportError
    from numba import njit as _njit
    HAVE_NUMBA = True
except ImportError:  # numba missing or disabled
    _njit = None
    HAVE_NUMBA = False


def kernel(fn):
    """Compile ``fn`` with numba when enabled, else return it unchanged."""
    if HAVE_NUMBA:
        return _njit(cache=True, nogil=True)(fn)
    return fn


def backend_name():
    return "numba" if HAVE_NUMBA else "python"
