"""Pure-Python/numpy fallback for the compiled box kernels.

Each function performs the same floating point operations in the same
order as ``_ckernels.pyx``, so the two backends agree bit for bit.
"""

import numpy as np


def _pairwise_inter(a, b):
    w = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    h = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.where((w > 0.0) & (h > 0.0), w * h, 0.0)
    return inter


def _area(boxes):
    return (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])


def iou_matrix(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.zeros((a.shape[0], b.shape[0]))
    if out.size == 0:
        return out
    inter = _pairwise_inter(a, b)
    pos = inter > 0.0
    union = _area(a)[:, None] + _area(b)[None, :] - inter
    out[pos] = inter[pos] / union[pos]
    return out


def ioc_matrix(parents, children):
    parents = np.asarray(parents, dtype=np.float64)
    children = np.asarray(children, dtype=np.float64)
    out = np.zeros((parents.shape[0], children.shape[0]))
    if out.size == 0:
        return out
    inter = _pairwise_inter(parents, children)
    pos = inter > 0.0
    area_c = np.broadcast_to(_area(children)[None, :], inter.shape)
    out[pos] = inter[pos] / area_c[pos]
    return out


def nms_scan(boxes, order, iou_threshold):
    boxes = np.asarray(boxes, dtype=np.float64)
    suppressed = np.zeros(boxes.shape[0], dtype=bool)
    keep = []
    order = [int(i) for i in order]
    for r, i in enumerate(order):
        if suppressed[i]:
            continue
        keep.append(i)
        rest = np.array([j for j in order[r + 1:] if not suppressed[j]], dtype=np.intp)
        if rest.size == 0:
            continue
        ious = iou_matrix(boxes[i:i + 1], boxes[rest])[0]
        suppressed[rest[ious > iou_threshold]] = True
    return np.array(keep, dtype=np.intp)


def greedy_scan(rows, cols, n_rows, n_cols):
    row_used = np.zeros(n_rows, dtype=bool)
    col_used = np.zeros(n_cols, dtype=bool)
    pairs = []
    for r, c in zip(rows, cols):
        if row_used[r] or col_used[c]:
            continue
        row_used[r] = col_used[c] = True
        pairs.append((int(r), int(c)))
    return np.array(pairs, dtype=np.intp).reshape(-1, 2)
