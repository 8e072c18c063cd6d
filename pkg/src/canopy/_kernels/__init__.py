"""Hot numeric kernels with backend selection at import time.

The compiled Cython extension is used when it was built; otherwise (or when
the ``CANOPY_NO_EXT`` environment variable is set) the pure numpy fallback
takes over. ``BACKEND`` names the active implementation.
"""

import os

if os.environ.get("CANOPY_NO_EXT"):
    from . import _pure as _impl
else:
    try:
        from . import _native as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _pure as _impl

BACKEND = _impl.BACKEND
smooth_heights = _impl.smooth_heights
locale_histograms = _impl.locale_histograms
points_in_convex_polygon = _impl.points_in_convex_polygon

__all__ = [
    "BACKEND",
    "smooth_heights",
    "locale_histograms",
    "points_in_convex_polygon",
]
