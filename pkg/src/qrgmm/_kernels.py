"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``QRGMM_PURE_PYTHON`` is set to a non-empty value other
than ``0``, the numpy fallback is used. ``BACKEND`` names the active one.
"""
import os

from . import _pykernels

if os.environ.get("QRGMM_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

qr_ipm = _impl.qr_ipm
interp_nodes = _impl.interp_nodes
interp_rows = _impl.interp_rows
ks_sorted = _impl.ks_sorted
wasserstein_sorted = _impl.wasserstein_sorted

CONVERGED, MAX_ITER, BREAKDOWN = _pykernels.CONVERGED, _pykernels.MAX_ITER, _pykernels.BREAKDOWN
