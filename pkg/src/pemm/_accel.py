"""JIT switch.

Hot kernels are written once as explicit loops and compiled with numba when
available. Setting ``PEMM_DISABLE_NUMBA=1`` (or missing numba) selects the
pure-numpy implementations instead.
"""
import os

_FLAG = os.environ.get("PEMM_DISABLE_NUMBA", "").strip().lower()

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(fn):
    """Compile ``fn`` in nopython mode, or return it unchanged without numba."""
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=False, fastmath=False)(fn)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
