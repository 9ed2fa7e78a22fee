"""Backend selection for the hot numeric kernels.

Set ``NMRPROJ_BACKEND=numpy`` to force the pure-numpy code path; the default
is ``numba`` whenever numba is importable.
"""

import os

_requested = os.environ.get("NMRPROJ_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"NMRPROJ_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_AVAILABLE = False

BACKEND = "numba" if (_requested == "numba" and NUMBA_AVAILABLE) else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity decorator otherwise."""
    if NUMBA_AVAILABLE:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f
