"""Kernel backend selection.

The hot kernels (2-D convolutions, bilinear resize) exist twice: a compiled
Cython extension (``sdattack._kernels``) and a NumPy fallback
(``sdattack._kernels_np``). The compiled backend is preferred when importable;
set ``SDATTACK_BACKEND=numpy`` to force the fallback or
``SDATTACK_BACKEND=compiled`` to fail loudly when the extension is missing.
"""

import os

from . import _kernels_np

_requested = os.environ.get("SDATTACK_BACKEND", "auto").lower()
if _requested not in ("auto", "compiled", "numpy"):
    raise ValueError(
        f"SDATTACK_BACKEND must be 'auto', 'compiled' or 'numpy', got {_requested!r}"
    )

_impl = _kernels_np
if _requested in ("auto", "compiled"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        if _requested == "compiled":
            raise ImportError(
                "SDATTACK_BACKEND=compiled but the sdattack._kernels extension "
                "is not built; install with 'pip install -e .'"
            )
    else:
        _impl = _compiled

BACKEND_NAME = _impl.NAME

conv2d_same_single = _impl.conv2d_same_single
conv2d_same_multi = _impl.conv2d_same_multi
conv2d_same_weight_grad = _impl.conv2d_same_weight_grad
resize_bilinear = _impl.resize_bilinear
