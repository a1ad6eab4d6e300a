"""Hot inner loops, compiled when available.

The Cython extension ``_ccore`` is used if it imports; otherwise (or when
``ABSAMAMBA_PURE_PYTHON=1`` is set) the numpy implementations in
``_fallback`` are used.  ``BACKEND`` names the active choice.
"""

import os

from . import _fallback as fallback

ccore = None
if not os.environ.get("ABSAMAMBA_PURE_PYTHON"):
    try:
        from . import _ccore as ccore
    except ImportError:  # extension not built
        ccore = None

_impl = ccore if ccore is not None else fallback
BACKEND = "cython" if ccore is not None else "numpy"

scan_forward = _impl.scan_forward
scan_backward = _impl.scan_backward
bspline_basis = _impl.bspline_basis

__all__ = ["BACKEND", "bspline_basis", "ccore", "fallback", "scan_backward", "scan_forward"]
