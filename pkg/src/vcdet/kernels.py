"""Hot-loop kernels with a compiled backend and a numpy fallback.

The Cython extension is used when it was built; setting
``VCDET_PURE_PYTHON=1`` forces the fallback. ``BACKEND`` names the one in use.
"""
import os

from . import _pykernels as python

try:
    if os.environ.get("VCDET_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python kernels requested")
    from ._native import _kernels as native
except ImportError:
    native = None

_impl = native if native is not None else python
BACKEND = "cython" if native is not None else "python"

tn_best_path = _impl.tn_best_path
segment_topk_sum = _impl.segment_topk_sum
