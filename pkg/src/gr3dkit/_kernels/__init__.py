"""Backend selection for the overlap kernels.

The compiled extension is preferred; the pure-Python twin is used when the
extension was never built or when ``GR3DKIT_PURE`` is set to a non-empty
value. Both backends expose the same functions and return the same bits.
"""

import os

if os.environ.get("GR3DKIT_PURE"):
    from gr3dkit._kernels import overlap_py as _impl
else:
    try:
        from gr3dkit._kernels import overlap as _impl  # type: ignore[no-redef]
    except ImportError:
        from gr3dkit._kernels import overlap_py as _impl

BACKEND = _impl.BACKEND
intersection_volume = _impl.intersection_volume
pair_iou = _impl.pair_iou
iou_matrix = _impl.iou_matrix

__all__ = ["BACKEND", "intersection_volume", "pair_iou", "iou_matrix"]
