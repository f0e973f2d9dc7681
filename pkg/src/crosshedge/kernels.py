"""Backend selection for the hot kernels.

The compiled extension is used when it imports; set
``CROSSHEDGE_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from . import _kernels_py

_force_py = os.environ.get("CROSSHEDGE_PURE_PYTHON", "").strip() not in ("", "0")

if _force_py:
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

gaussian = _impl.gaussian
tridiag_solve = _impl.tridiag_solve

__all__ = ["BACKEND", "gaussian", "tridiag_solve"]
