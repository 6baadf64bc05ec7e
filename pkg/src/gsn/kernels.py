"""Backend selection for the hot loops.

The compiled extension is used when it imports; set ``GSN_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("GSN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass

jacobi_eigh = _impl.jacobi_eigh
slic_assign = _impl.slic_assign
label_components = _impl.label_components
