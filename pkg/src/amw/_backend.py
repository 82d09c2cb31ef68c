"""Pick the nearest-neighbour kernel at import time.

The compiled extension is used when it was built; setting
``AMW_BACKEND=python`` forces the numpy fallback.
"""

from __future__ import annotations

import os

from . import _knn_py

try:
    from . import _knn_ext
except ImportError:  # extension not built
    _knn_ext = None

KERNELS = {"python": _knn_py.knn_sorted}
if _knn_ext is not None:
    KERNELS["compiled"] = _knn_ext.knn_sorted

_requested = os.environ.get("AMW_BACKEND", "").strip().lower()
if _requested and _requested not in ("python", "compiled"):
    raise ImportError(f"AMW_BACKEND must be 'python' or 'compiled', got {_requested!r}")
if _requested == "compiled" and _knn_ext is None:
    raise ImportError("AMW_BACKEND=compiled but amw._knn_ext is not built")

BACKEND = _requested or ("compiled" if _knn_ext is not None else "python")
knn_sorted = KERNELS[BACKEND]
