"""Optional numba acceleration.

Set ``DEEPHEDGE_PURE_NUMPY=1`` before import to force the numpy fallback
kernels even when numba is installed.
"""
import os

_DISABLED = os.environ.get("DEEPHEDGE_PURE_NUMPY", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    import numba

    HAS_NUMBA = True
except ImportError:
    numba = None
    HAS_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise identity."""
    if HAS_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def backend_name() -> str:
    return "numba" if HAS_NUMBA else "numpy"
