import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cuetrack.tcp import (LENIENT_TIERS, DetectionSet, TcpConfig, cosine_matrix, edge_weights, propagate,
                          propagation_strength, recover, run_tcp, select_candidates, select_sources)


def dset(boxes, scores, classes, feats):
    return DetectionSet(np.array(boxes, float), scores, classes, np.array(feats, float))


@pytest.mark.parametrize("mean_w,count,eta", [
    (0.85, 4, 0.7), (0.85, 3, 0.5), (0.85, 2, 0.3), (0.85, 1, 0.0),
    (0.7, 9, 0.5), (0.55, 9, 0.3), (0.5, 9, 0.0), (0.8, 4, 0.5), (2.0, 0, 0.0),
])
def test_strict_tiers(mean_w, count, eta):
    assert propagation_strength(mean_w, count) == eta


def test_lenient_tiers_admit_single_source():
    cfg = TcpConfig(tiers=LENIENT_TIERS)
    assert propagation_strength(0.55, 1, cfg) == 0.3
    assert propagation_strength(0.85, 3, cfg) == 0.7


def test_tier_validation():
    with pytest.raises(ValueError):
        TcpConfig(tiers=((0.5, 2, 0.3), (0.8, 4, 0.7)))
    with pytest.raises(ValueError):
        TcpConfig(tau_low=0.6, tau_high=0.5)
    assert TcpConfig(tiers=()).tiers == ()


def test_cosine_matrix_zero_vectors():
    out = cosine_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]), np.array([[2.0, 0.0], [0.0, 3.0]]))
    np.testing.assert_array_equal(out, [[1.0, 0.0], [0.0, 0.0]])


def test_select_sources_strict_threshold_and_nms():
    prev = dset([[0, 0, 10, 10], [1, 0, 11, 10], [50, 50, 60, 60], [80, 80, 90, 90]],
                [0.9, 0.8, 0.5, 0.7], [0, 0, 0, 1], np.eye(4))
    src = select_sources(prev)
    assert sorted(src.index.tolist()) == [0, 3]


def test_select_candidates_band_order_and_cap():
    boxes = [[i * 20, 0, i * 20 + 10, 10] for i in range(5)]
    curr = dset(boxes, [0.04, 0.05, 0.3, 0.5, 0.51], [0] * 5, np.eye(5))
    cand = select_candidates(curr)
    assert cand.index.tolist() == [3, 2, 1]
    assert select_candidates(curr, TcpConfig(candidate_cap=2)).index.tolist() == [3, 2]


def test_propagate_hand_example():
    # two same-class sources with unit cosine, one other-class source
    feats = [[1.0, 0.0]] * 3
    sources = dset([[0, 0, 10, 10], [100, 100, 110, 110], [0, 0, 10, 10]], [0.9, 0.7, 0.99], [0, 0, 1], feats)
    cand = dset([[0, 0, 10, 10]], [0.4], [0], [[1.0, 0.0]])
    edges = edge_weights(sources, cand)
    np.testing.assert_allclose(edges.w[:, 0], [1.3, 1.0, 1.3])
    adjusted, etas = propagate(cand, sources, edges)
    # mean weight 1.15 with two sources -> eta 0.3; weighted source score (1.3*0.9 + 0.7) / 2.3
    borrowed = (1.3 * 0.9 + 1.0 * 0.7) / 2.3
    assert etas[0] == 0.3
    assert adjusted[0] == pytest.approx(0.7 * 0.4 + 0.3 * borrowed)
    rec = recover(cand, adjusted)
    assert len(rec) == 1 and rec.scores[0] == pytest.approx(adjusted[0])


def test_propagate_nonpositive_weight_sum_is_skipped():
    sources = dset([[0, 0, 1, 1], [5, 5, 6, 6]], [0.9, 0.9], [0, 0], [[1.0, 0.0], [1.0, 0.0]])
    cand = dset([[20, 20, 21, 21]], [0.3], [0], [[-1.0, 0.0]])
    adjusted, etas = propagate(cand, sources, edge_weights(sources, cand))
    assert adjusted[0] == 0.3 and etas[0] == 0.0


def test_recover_threshold_is_strict():
    cand = dset([[0, 0, 1, 1], [2, 2, 3, 3]], [0.2, 0.2], [0, 0], np.eye(2))
    assert recover(cand, np.array([0.5, 0.50001])).index.tolist() == [1]


def test_run_tcp_without_sources_recovers_nothing():
    curr = dset([[0, 0, 1, 1]], [0.3], [0], [[1.0]])
    assert len(run_tcp(curr.take([]), curr)) == 0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 6), st.integers(1, 8), st.integers(0, 2 ** 31))
def test_propagation_never_lowers_scores(n_src, n_cand, seed):
    rng = np.random.default_rng(seed)
    def boxes(n):
        xy = rng.uniform(0, 50, (n, 2))
        return np.concatenate([xy, xy + rng.uniform(1, 30, (n, 2))], axis=1)
    sources = DetectionSet(boxes(n_src), rng.uniform(0.5, 1, n_src), rng.integers(0, 2, n_src),
                           rng.normal(size=(n_src, 3)))
    cand = DetectionSet(boxes(n_cand), rng.uniform(0.05, 0.5, n_cand), rng.integers(0, 2, n_cand),
                        rng.normal(size=(n_cand, 3)))
    adjusted, etas = propagate(cand, sources, edge_weights(sources, cand))
    assert np.all(adjusted >= cand.scores)
    assert np.all(np.isin(etas, [0.0, 0.3, 0.5, 0.7]))
    assert np.all(adjusted <= 1.0)
