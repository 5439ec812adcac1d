"""Optional numba acceleration.

Set ``MIXAGENT_NO_NUMBA=1`` to force the pure-numpy kernels. Results of the
integer-valued kernels are identical across both paths; float reductions may
differ in the last few ulps because summation order differs.
"""
from __future__ import annotations

import os

_DISABLED = os.environ.get("MIXAGENT_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised with the env flag
    _njit = None
    HAVE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise identity."""
    if HAVE_NUMBA:
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def backend_name() -> str:
    return "numba" if HAVE_NUMBA else "numpy"
