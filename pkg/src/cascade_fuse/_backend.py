"""Kernel backend selection.

The hot kernels in :mod:`cascade_fuse._kernels` exist in two versions: a
numba ``@njit`` version and a vectorized pure-numpy version. The backend is
chosen once at import time from the ``CASCADE_FUSE_BACKEND`` environment
variable (``numba`` or ``numpy``). ``numba`` is the default when the package
is importable; otherwise the numpy path is used silently.
"""

from __future__ import annotations

import os

try:
    import numba
except ImportError:  # pragma: no cover - depends on the environment
    numba = None

HAS_NUMBA = numba is not None

_requested = os.environ.get("CASCADE_FUSE_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(
        f"CASCADE_FUSE_BACKEND must be 'numba' or 'numpy', got {_requested!r}"
    )

BACKEND = "numba" if (_requested == "numba" and HAS_NUMBA) else "numpy"


def njit(fn):
    """Compile ``fn`` with numba when available, else return it unchanged."""
    if HAS_NUMBA:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn
