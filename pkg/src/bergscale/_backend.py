"""Select the compiled kernel loops when available.

Set ``BERGSCALE_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

BACKEND = "python"
if os.environ.get("BERGSCALE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = None
else:
    _impl = None

if _impl is None:
    from . import _fallback as _impl

ellipsoid_log_kernel = _impl.ellipsoid_log_kernel
ellipsoid_series = _impl.ellipsoid_series
monomial_matrix = _impl.monomial_matrix
