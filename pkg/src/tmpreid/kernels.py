"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the pure-Python
fallback. Set ``TMPREID_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _fallback

try:
    if os.environ.get("TMPREID_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python kernels requested")
    from . import _kernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _fallback
    BACKEND = "python"

min_overlap = _impl.min_overlap
expand_clusters = _impl.expand_clusters


def available_backends():
    """Mapping of backend name to kernel module, for tests and benchmarks."""
    found = {"python": _fallback}
    try:
        from . import _kernels

        found["cython"] = _kernels
    except ImportError:
        pass
    return found
