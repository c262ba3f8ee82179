"""Kernel backend selection.

The compiled kernel is preferred when present; the NumPy kernel is the
fallback and the reference semantics.  Override with the environment
variable VISCOFIT_KERNEL=numpy|cython (checked once, at import).
"""

from __future__ import annotations

import os

from . import _kernel_numpy

_FORCED = os.environ.get("VISCOFIT_KERNEL", "").strip().lower()

if _FORCED == "numpy":
    _active = _kernel_numpy
else:
    try:
        from . import _kernel_cy as _active  # type: ignore[no-redef]
    except ImportError:
        if _FORCED == "cython":
            raise ImportError(
                "VISCOFIT_KERNEL=cython requested but the compiled kernel "
                "is not built; run `python setup.py build_ext --inplace`"
            )
        _active = _kernel_numpy


def kernel():
    """The active kernel module (attributes: BACKEND, conv_forward,
    conv_dual, conv_backward)."""
    return _active


def backend_name() -> str:
    return _active.BACKEND
