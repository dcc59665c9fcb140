"""Select the compiled kernels when available, else the numpy fallback.

Set ``RGCR_PURE_PYTHON=1`` to force the fallback (used by the benchmark and
by the backend-equivalence tests).
"""
import os

from . import _pykernels

BACKEND = "python"
kernels = _pykernels

if os.environ.get("RGCR_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as kernels  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        pass

__all__ = ["BACKEND", "kernels"]
