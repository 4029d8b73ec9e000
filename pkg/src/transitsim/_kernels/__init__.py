"""Kernel backend selection: compiled extension if available, else pure.

Set TRANSITSIM_PURE=1 to force the pure-Python fallback (used by the
benchmark and by tests that compare the two backends).
"""

from __future__ import annotations

import os

from . import pure

if os.environ.get("TRANSITSIM_PURE"):
    _impl = pure
else:
    try:
        from . import _speedups as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = pure

INF = pure.INF
BACKEND = _impl.BACKEND
k_nearest_sources = _impl.k_nearest_sources
bounded_dists = _impl.bounded_dists
raptor_arrivals = _impl.raptor_arrivals
