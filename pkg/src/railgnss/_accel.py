"""Numba switch.

Set ``RAILGNSS_DISABLE_NUMBA=1`` to run the pure-numpy kernels instead of the
compiled ones. The flag is read once, at import time.
"""

import os
from typing import Any, Callable

ENV_FLAG = "RAILGNSS_DISABLE_NUMBA"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def numba_disabled_by_env() -> bool:
    return os.environ.get(ENV_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


USE_NUMBA = HAVE_NUMBA and not numba_disabled_by_env()


def njit(*args: Any, **kwargs: Any) -> Callable:
    """``numba.njit(cache=True)`` or a no-op decorator when numba is missing."""
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda f: f
