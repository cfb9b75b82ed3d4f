"""Kernel backend selection.

Prefers the compiled extension; falls back to the numpy implementation
when the build is unavailable. Set NOMAQ_PURE_PYTHON=1 to force the
fallback (the equivalence tests and benchmarks use this).
"""

import os

from . import _kernels_py

_impl = None
if not os.environ.get("NOMAQ_PURE_PYTHON"):
    try:
        from . import _speedups as _impl
    except ImportError:
        _impl = None
if _impl is None:
    _impl = _kernels_py

BACKEND = "compiled" if _impl is not _kernels_py else "python"

sic_eps_tensors = _impl.sic_eps_tensors
joint_eps_tensor = _impl.joint_eps_tensor
sic_best_reduce = _impl.sic_best_reduce
joint_best_reduce = _impl.joint_best_reduce
single_best_reduce = _impl.single_best_reduce
