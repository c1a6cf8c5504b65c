"""Kernel backend selection: compiled extension if present, else numpy.

``BACKEND`` names the active implementation ("native" or "python").
Benchmarks and equivalence tests import ``_pykernels`` / ``_native``
directly instead of flipping global state.
"""

try:
    from . import _native as _impl
    BACKEND = "native"
except ImportError:  # extension not built on this install
    from . import _pykernels as _impl
    BACKEND = "python"

dp_segment = _impl.dp_segment

__all__ = ["BACKEND", "dp_segment"]
