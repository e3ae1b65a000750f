"""Backend switch for the hot kernels.

Set ``MDLAB_BACKEND=numpy`` (or ``NUMBA_DISABLE_JIT=1``) to run the pure numpy
code paths; the default is numba when it imports cleanly.
"""
import os

_requested = os.environ.get("MDLAB_BACKEND", "numba").strip().lower()

try:
    import numba  # noqa: F401

    _HAVE_NUMBA = os.environ.get("NUMBA_DISABLE_JIT", "0") != "1"
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

USE_NUMBA = _HAVE_NUMBA and _requested != "numpy"
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if _HAVE_NUMBA:
        from numba import njit as _njit

        kwargs.setdefault("cache", True)
        return _njit(*args, **kwargs)

    def wrap(fn):
        return fn

    if args and callable(args[0]):
        return args[0]
    return wrap
