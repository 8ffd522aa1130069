"""Kernel selection: the compiled extension when available, NumPy otherwise.

Set ``TRAPBOSE_PURE_PYTHON=1`` to force the NumPy fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
if os.environ.get("TRAPBOSE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

g_half = _impl.g_half
ideal_ladder = _impl.ideal_ladder
thermal_accumulate = _impl.thermal_accumulate
ladder_cutoff = _kernels_py.ladder_cutoff
