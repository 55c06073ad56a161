"""Runtime selection between the compiled and numpy kernel backends.

The compiled extension is preferred when importable. Set ODYN_KERNELS to
"numpy" or "ext" to force a choice; "ext" raises if the extension is
missing rather than silently falling back.
"""

from __future__ import annotations

import os

from . import kernels_numpy

_CHOICE = os.environ.get("ODYN_KERNELS", "auto").lower()

if _CHOICE == "numpy":
    _impl = kernels_numpy
elif _CHOICE == "ext":
    from . import _kernels as _impl  # type: ignore[no-redef]
elif _CHOICE == "auto":
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = kernels_numpy
else:
    raise ValueError(f"ODYN_KERNELS must be 'auto', 'ext', or 'numpy', got {_CHOICE!r}")

im2col = _impl.im2col
col2im = _impl.col2im
maxpool2x2_forward = _impl.maxpool2x2_forward
maxpool2x2_backward = _impl.maxpool2x2_backward


def active_backend() -> str:
    """Name of the kernel implementation in use ("ext" or "numpy")."""
    return _impl.BACKEND_NAME
