"""Backend selection for the numeric kernels.

The compiled extension is used when it imports; set ``MIMIC_SEM_PURE_PYTHON=1``
to force the NumPy fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
if not os.environ.get("MIMIC_SEM_PURE_PYTHON"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
else:
    _impl = _kernels_py

mardia_sums = _impl.mardia_sums
loess_rows = _impl.loess_rows

__all__ = ["BACKEND", "mardia_sums", "loess_rows"]
