"""Kernel backend selection.

The compiled ``_kernels`` extension is used when it imports; otherwise the
numpy fallback. Set ``RCINV_BACKEND=python`` to force the fallback (used by
the parity tests and the benchmark).
"""

import os
import warnings

from . import _fallback

BACKEND_ENV = "RCINV_BACKEND"

_requested = os.environ.get(BACKEND_ENV, "auto").lower()

if _requested == "python":
    kernels = _fallback
    NAME = "python"
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]

        NAME = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        warnings.warn(
            "rcinvariants: compiled kernels unavailable, using numpy fallback",
            RuntimeWarning,
            stacklevel=2,
        )
        kernels = _fallback
        NAME = "python"


def get(name: str):
    """Return the named module ("compiled" or "python") explicitly."""
    if name == "python":
        return _fallback
    if name == "compiled":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
