"""Backend selection for the flow kernel.

The compiled kernel handles first-order filters (the 2-D cylinder); every
other order, and any install without the extension, runs the numpy
reference.  Set ``PHASELOCK_PURE=1`` to force the reference everywhere.
"""
import os

from . import _flow
from ._flow import (BUDGET, CROSSED, LOCKED, NONFINITE, REACHED_END, STOP_ANY,  # noqa: F401
                    STOP_LEVEL, STOP_NONE, UNDERFLOW)

try:
    if os.environ.get("PHASELOCK_PURE"):
        raise ImportError("pure backend requested")
    from . import _kernel
except ImportError:
    _kernel = None

HAVE_COMPILED = _kernel is not None
BACKEND = "compiled" if HAVE_COMPILED else "python"


def flow_function(order: int, backend: str | None = None):
    """Return the flow routine for a filter of the given order."""
    backend = backend or BACKEND
    if backend == "compiled":
        if not HAVE_COMPILED:
            raise RuntimeError("compiled kernel is not available")
        if order == 1:
            return _kernel.flow
        return _flow.flow
    if backend != "python":
        raise ValueError(f"unknown backend {backend!r}")
    return _flow.flow
