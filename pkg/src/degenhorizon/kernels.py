"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy versions
are used. Setting ``DEGENHORIZON_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
if os.environ.get("DEGENHORIZON_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _kernels_py
else:
    _impl = _kernels_py

eval_sh_points = _impl.eval_sh_points
ricci_scalar_from_jets = _impl.ricci_scalar_from_jets
legendre_pq = _kernels_py.legendre_pq

__all__ = ["BACKEND", "eval_sh_points", "ricci_scalar_from_jets", "legendre_pq"]
