"""Backend selection for the hot kernels.

The inner loops in ``_kernels`` are written against the numba-compilable
subset of NumPy. By default they are compiled with ``numba.njit``; setting
the environment variable ``KICKEDTORUS_PURE_NUMPY`` to 1/true/yes (or
running without numba installed) leaves them as plain Python functions, so
the exact same source runs interpreted. ``bench/bench_backends.py``
compares the two paths.
"""

import os

_TRUTHY = {"1", "true", "yes", "on"}


def _pure_requested() -> bool:
    return os.environ.get("KICKEDTORUS_PURE_NUMPY", "").strip().lower() in _TRUTHY


try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a default dependency
    _numba = None

NUMBA_ENABLED = _numba is not None and not _pure_requested()


def maybe_njit(**kwargs):
    """Decorator factory: ``numba.njit(**kwargs)`` or a passthrough."""
    if NUMBA_ENABLED:
        return _numba.njit(**kwargs)

    def passthrough(func):
        return func

    return passthrough


def backend_name() -> str:
    """Name of the active kernel backend, ``numba`` or ``numpy``."""
    return "numba" if NUMBA_ENABLED else "numpy"
