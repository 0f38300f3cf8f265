"""Kernel backend selection: compiled extension with a NumPy fallback.

The compiled module is preferred; ``DEEPBET_PURE_PYTHON=1`` forces the
NumPy implementations (used by the backend-comparison benchmark and tests).
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("DEEPBET_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

sample_grid = _impl.sample_grid
label_components = _impl.label_components
