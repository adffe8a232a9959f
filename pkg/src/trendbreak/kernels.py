"""Backend selection for the fitting kernels.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy implementation in ``_pykernels`` is used. Setting the environment
variable ``TRENDBREAK_PURE=1`` forces the numpy backend.
"""
from __future__ import annotations

import os

from . import _pykernels as pure

compiled = None
if not os.environ.get("TRENDBREAK_PURE"):
    try:
        from . import _ckernels as compiled
    except ImportError:  # extension not built
        compiled = None

_impl = compiled if compiled is not None else pure

BACKEND: str = _impl.BACKEND
single_fit = _impl.single_fit
dual_fit = _impl.dual_fit
dual_rss_curves = _impl.dual_rss_curves

__all__ = ["BACKEND", "compiled", "pure", "single_fit", "dual_fit", "dual_rss_curves"]
