"""Kernel backend selection: numba-jitted hot loops vs pure numpy.

The env flag INPAINT_FORGE_BACKEND picks the implementation of the
gather/scatter and sliding-window kernels:

    INPAINT_FORGE_BACKEND=numba   jitted kernels (default when numba imports)
    INPAINT_FORGE_BACKEND=numpy   pure-numpy fallback

Both backends produce the same results up to float summation order; the
matrix products themselves go through BLAS either way.
"""

import os

from . import BACKEND_ENV
from . import kernels_numpy

_active = None


def _resolve():
    name = os.environ.get(BACKEND_ENV, "").strip().lower()
    if name == "numpy":
        return kernels_numpy
    if name == "numba":
        from . import kernels_numba  # raises if numba is unavailable

        return kernels_numba
    if name:
        raise ValueError(
            f"unknown {BACKEND_ENV}={name!r}; expected 'numba' or 'numpy'"
        )
    try:
        from . import kernels_numba

        return kernels_numba
    except ImportError:
        return kernels_numpy


def active():
    """Return the active kernel module (resolved once, then cached)."""
    global _active
    if _active is None:
        _active = _resolve()
    return _active


def reset():
    """Drop the cached choice so the env flag is re-read (used by tests)."""
    global _active
    _active = None


def name():
    return "numba" if active().IS_NUMBA else "numpy"
