"""Numba acceleration shim.

All hot kernels in the package are decorated with :func:`njit` from this
module.  By default they are compiled with numba; setting the environment
variable ``RPSLAB_NO_NUMBA=1`` (or any non-empty value) before import selects
the pure-python/numpy fallback path, where the same functions run
uncompiled.  The fallback is slow but bit-compatible, and is what the
``rpslab bench`` command compares against.
"""

import os

NUMBA_ENABLED = False

if not os.environ.get("RPSLAB_NO_NUMBA"):
    try:
        import numba

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a hard dep normally
        NUMBA_ENABLED = False


def njit(func=None, **kwargs):
    """``numba.njit`` when enabled, identity decorator otherwise."""
    if not NUMBA_ENABLED:
        if func is not None:
            return func
        return lambda f: f
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    if func is not None:
        return numba.njit(func, **kwargs)
    return numba.njit(**kwargs)


def python_impl(func):
    """Return the uncompiled python implementation of a kernel.

    Used by the benchmark to time the fallback path while numba is active.
    """
    return getattr(func, "py_func", func)
