"""Loss/gradient kernels: compiled extension with a numpy fallback.

The compiled module is preferred when importable; set
``PERSIMIX_PURE_PYTHON=1`` to force the fallback (useful for benchmarking
and debugging).  ``BACKEND`` records which implementation is active.
"""
import os

from . import _ref

if os.environ.get("PERSIMIX_PURE_PYTHON"):
    _impl = _ref
    BACKEND = "python"
else:
    try:
        from . import _fast as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = _ref
        BACKEND = "python"

mixture_loss_grad = _impl.mixture_loss_grad

__all__ = ["mixture_loss_grad", "BACKEND"]
