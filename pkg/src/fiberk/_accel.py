"""Numba switch.

Kernels are written once as plain Python loops and compiled with ``njit``
when numba is importable and ``FIBERK_DISABLE_NUMBA`` is unset (or ``0``).
Every compiled kernel also has a vectorized numpy counterpart; callers pick
between them with :data:`USE_NUMBA`.

``FIBERK_NUM_THREADS`` caps the numba thread pool.
"""

import logging
import os

logger = logging.getLogger(__name__)

_disabled = os.environ.get("FIBERK_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

try:
    if _disabled:
        raise ImportError("disabled by FIBERK_DISABLE_NUMBA")
    import numba

    if "NUMBA_THREADING_LAYER" not in os.environ:
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
    njit = numba.njit
    prange = numba.prange
    HAVE_NUMBA = True
except ImportError as exc:  # pragma: no cover - exercised only without numba
    logger.debug("numba unavailable (%s); using numpy kernels", exc)
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(func):
            return func

        return wrap

    prange = range

USE_NUMBA = HAVE_NUMBA


def set_threads_from_env():
    """Apply ``FIBERK_NUM_THREADS`` to the numba pool, if both exist."""
    value = os.environ.get("FIBERK_NUM_THREADS")
    if not value or not HAVE_NUMBA:
        return
    n = max(1, min(int(value), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)


set_threads_from_env()
