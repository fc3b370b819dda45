import numpy as np
import pytest

from cuetrack import kernels

from conftest import random_boxes


def brute_iou(a, b):
    w = min(a[2], b[2]) - max(a[0], b[0])
    h = min(a[3], b[3]) - max(a[1], b[1])
    if w <= 0 or h <= 0:
        return 0.0
    inter = w * h
    return inter / ((a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter)


def test_iou_matrix_matches_loops(backend, rng):
    a, b = random_boxes(rng, 13), random_boxes(rng, 7)
    m = kernels.iou_matrix(a, b)
    assert m.shape == (13, 7)
    for i in range(13):
        for j in range(7):
            assert abs(m[i, j] - brute_iou(a[i], b[j])) <= 1e-12


def test_empty_inputs(backend):
    assert kernels.iou_matrix(np.zeros((0, 4)), np.zeros((3, 4))).shape == (0, 3)
    assert kernels.nms(np.zeros((0, 4)), np.zeros(0), 0.5).size == 0
    assert kernels.greedy_assign(np.zeros((0, 2)), 0.1).shape == (0, 2)


def test_backends_agree_bitwise(rng):
    if len(kernels.available_backends()) < 2:
        pytest.skip("compiled kernels not built")
    a, b = random_boxes(rng, 50), random_boxes(rng, 40)
    scores = rng.uniform(size=50)
    sim = rng.uniform(size=(20, 30))
    out = {}
    for name in ("cython", "python"):
        kernels.use_backend(name)
        out[name] = (kernels.iou_matrix(a, b), kernels.ioc_matrix(a, b),
                     kernels.nms(a, scores, 0.3), kernels.greedy_assign(sim, 0.2))
    kernels.use_backend(kernels.available_backends()[0])
    for x, y in zip(out["cython"], out["python"]):
        assert np.array_equal(x, y)


def test_greedy_assign_global_max_order(backend):
    sim = np.array([[0.9, 0.8], [0.85, 0.1]])
    # (0,0) is taken first, which blocks the better-total (0,1),(1,0)
    assert kernels.greedy_assign(sim, 0.05).tolist() == [[0, 0], [1, 1]]
    assert kernels.greedy_assign(sim, 0.5).tolist() == [[0, 0]]
    # strict threshold
    assert kernels.greedy_assign(np.array([[0.5]]), 0.5).tolist() == []


def test_nms_keeps_nonoverlapping(backend, rng):
    boxes = np.array([[i * 20.0, 0, i * 20 + 10, 10] for i in range(10)])
    keep = kernels.nms(boxes, rng.uniform(size=10), 0.1)
    assert sorted(keep.tolist()) == list(range(10))


def test_use_backend_rejects_unknown():
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")
