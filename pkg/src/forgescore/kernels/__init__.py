"""Warp kernel dispatch: compiled extension when built, NumPy otherwise.

Set FORGESCORE_PURE_PY=1 to force the NumPy fallback.  `BACKEND` names
the active implementation; `benchmarks/bench_kernels.py` compares the
two.
"""

import os

from . import _warp_np

BACKEND = "numpy"
_impl = _warp_np

if not os.environ.get("FORGESCORE_PURE_PY"):
    try:
        from . import _warp_cy as _compiled
    except ImportError:
        pass
    else:
        BACKEND = "compiled"
        _impl = _compiled

warp_image = _impl.warp_image
warp_error_pair = _impl.warp_error_pair

__all__ = ["BACKEND", "warp_image", "warp_error_pair"]
