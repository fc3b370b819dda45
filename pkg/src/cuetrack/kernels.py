"""Backend selection for the pairwise box kernels.

The compiled extension is used when it was built; otherwise, or when the
``CUETRACK_PURE_PYTHON`` environment variable is set to a non-empty value
other than ``0``, the numpy fallback is used. Both backends return identical
results, so the choice only affects speed.
"""

from __future__ import annotations

import os
from types import ModuleType

import numpy as np

from . import _pykernels


def _load_compiled() -> ModuleType | None:
    if os.environ.get("CUETRACK_PURE_PYTHON", "") not in ("", "0"):
        return None
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels


_compiled = _load_compiled()
_backend: ModuleType = _compiled if _compiled is not None else _pykernels


def backend_name() -> str:
    return "cython" if _backend is not _pykernels else "python"


def available_backends() -> list[str]:
    names = ["python"]
    if _compiled is not None:
        names.insert(0, "cython")
    return names


def use_backend(name: str) -> None:
    """Switch the active backend (``"cython"`` or ``"python"``)."""
    global _backend
    if name == "python":
        _backend = _pykernels
    elif name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available in this build")
        _backend = _compiled
    else:
        raise ValueError(f"unknown backend {name!r}")


def _as_boxes(boxes) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(boxes, dtype=np.float64).reshape(-1, 4))


def iou_matrix(a, b) -> np.ndarray:
    return _backend.iou_matrix(_as_boxes(a), _as_boxes(b))


def ioc_matrix(parents, children) -> np.ndarray:
    """``out[i, j]`` is the fraction of child ``j`` covered by parent ``i``."""
    return _backend.ioc_matrix(_as_boxes(parents), _as_boxes(children))


def nms_order(boxes, scores) -> np.ndarray:
    """Visiting order: score desc, then x1, y1, x2, y2 asc, then input index."""
    boxes = _as_boxes(boxes)
    scores = np.asarray(scores, dtype=np.float64)
    idx = np.arange(len(scores))
    # lexsort keys are listed from least to most significant
    return np.lexsort((idx, boxes[:, 3], boxes[:, 2], boxes[:, 1], boxes[:, 0], -scores)).astype(np.intp)


def nms(boxes, scores, iou_threshold: float) -> np.ndarray:
    """Indices of boxes kept by greedy suppression, in visiting order."""
    boxes = _as_boxes(boxes)
    if boxes.shape[0] == 0:
        return np.zeros(0, dtype=np.intp)
    order = np.ascontiguousarray(nms_order(boxes, scores))
    return _backend.nms_scan(boxes, order, float(iou_threshold))


def greedy_assign(sim, threshold: float) -> np.ndarray:
    """Repeatedly take the largest free entry strictly above ``threshold``.

    Ties go to the lower row, then the lower column. Returns an ``(k, 2)``
    array of ``(row, col)`` pairs in the order they were taken.
    """
    sim = np.asarray(sim, dtype=np.float64)
    if sim.ndim != 2 or sim.size == 0:
        return np.zeros((0, 2), dtype=np.intp)
    rows, cols = np.nonzero(sim > threshold)
    vals = sim[rows, cols]
    order = np.lexsort((cols, rows, -vals))
    rows = np.ascontiguousarray(rows[order], dtype=np.intp)
    cols = np.ascontiguousarray(cols[order], dtype=np.intp)
    return _backend.greedy_scan(rows, cols, sim.shape[0], sim.shape[1])
