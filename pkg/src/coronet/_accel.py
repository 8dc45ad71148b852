"""Numba availability switch.

Set ``CORONET_DISABLE_JIT=1`` to force the pure-numpy kernels even when
numba is importable.
"""
import os

_FLAG = os.environ.get("CORONET_DISABLE_JIT", "").strip().lower()
JIT_DISABLED = _FLAG in {"1", "true", "yes", "on"}

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

HAVE_NUMBA = _numba is not None
USE_JIT = HAVE_NUMBA and not JIT_DISABLED


def njit(func):
    """``numba.njit(cache=True)`` when numba is importable, else identity."""
    if _numba is None:
        return func
    return _numba.njit(cache=True)(func)
