"""Numba/numpy backend selection for the hot numeric kernels.

The environment variable EMG_OPEN_BACKEND picks the implementation:
"numba" (default when numba imports) or "numpy" (pure-numpy fallback).
EMG_OPEN_THREADS caps numba's thread count.
"""

import os

_requested = os.environ.get("EMG_OPEN_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"EMG_OPEN_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

HAVE_NUMBA = False
if _requested == "numba":
    try:
        import numba  # noqa: F401

        HAVE_NUMBA = True
    except ImportError:
        HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _requested == "numba"

if USE_NUMBA:
    _threads = os.environ.get("EMG_OPEN_THREADS")
    if _threads:
        import numba

        numba.set_num_threads(max(1, min(int(_threads), numba.config.NUMBA_NUM_THREADS)))


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
