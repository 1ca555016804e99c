"""Backend switch for the compiled kernels.

Set ``ABSLOPE_DISABLE_NUMBA=1`` before import to force the pure-numpy path.
"""
import os

_flag = os.environ.get("ABSLOPE_DISABLE_NUMBA", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency
    numba = None

USE_NUMBA = numba is not None and _flag not in ("1", "true", "yes", "on")

numba_kwargs = {
    "nopython": True,
    "cache": True,
    "nogil": True,
}


def njit(fn):
    """Compile ``fn`` with numba when available, otherwise return it unchanged."""
    if numba is None:
        return fn
    return numba.jit(**numba_kwargs)(fn)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
