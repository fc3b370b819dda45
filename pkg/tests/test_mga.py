import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cuetrack import autodiff as ad
from cuetrack.mga import MgaConfig, MgaParams, aggregate, attention_weights, build_inclusion_mask, taq_scores

PARENT_AND_CHILDREN = np.array([
    [0, 0, 100, 100],    # parent
    [10, 10, 30, 30],    # child of 0
    [60, 60, 90, 90],    # child of 0
    [200, 200, 240, 240],  # unrelated leaf
], dtype=float)


def test_inclusion_mask():
    mask = build_inclusion_mask(PARENT_AND_CHILDREN)
    expected = np.zeros((4, 4), dtype=np.uint8)
    expected[0, 1] = expected[0, 2] = 1
    np.testing.assert_array_equal(mask, expected)


def test_inclusion_mask_threshold_is_strict():
    boxes = np.array([[0, 0, 10, 10], [2, 0, 12, 10]], dtype=float)  # ioc = 0.8 exactly
    assert build_inclusion_mask(boxes, 0.8).sum() == 0
    assert build_inclusion_mask(boxes, 0.79).sum() == 2


def test_identical_boxes_include_each_other_but_not_themselves():
    mask = build_inclusion_mask(np.array([[0, 0, 5, 5], [0, 0, 5, 5]], dtype=float))
    np.testing.assert_array_equal(mask, [[0, 1], [1, 0]])


def test_taq_first_frame_and_range():
    f = np.random.default_rng(0).normal(size=(3, 4))
    np.testing.assert_array_equal(taq_scores(f, None, 5.0), 1.0)
    np.testing.assert_array_equal(taq_scores(f, np.zeros((0, 4)), 5.0), 1.0)
    q = taq_scores(f, np.random.default_rng(1).normal(size=(5, 4)), 5.0)
    assert np.all((q >= 0) & (q <= 1 + 1e-12))


def test_taq_one_to_one_sharp_match_is_near_one():
    f = np.eye(3) * 10
    np.testing.assert_allclose(taq_scores(f, f, 5.0), 1.0, atol=1e-12)


def test_leaves_are_bit_identical():
    rng = np.random.default_rng(2)
    f = rng.normal(size=(4, 6))
    out = aggregate(f, build_inclusion_mask(PARENT_AND_CHILDREN), np.ones(4), MgaParams.init(6, rng))
    np.testing.assert_array_equal(out[1:], f[1:])
    assert not np.array_equal(out[0], f[0])


def test_lambda_zero_is_identity():
    rng = np.random.default_rng(3)
    f = rng.normal(size=(4, 6))
    out = aggregate(f, build_inclusion_mask(PARENT_AND_CHILDREN), np.ones(4), MgaParams.init(6, rng), lam=0.0)
    np.testing.assert_array_equal(out, f)


def test_gated_children_contribute_nothing():
    rng = np.random.default_rng(4)
    f = rng.normal(size=(4, 6))
    mask = build_inclusion_mask(PARENT_AND_CHILDREN)
    params = MgaParams.init(6, rng)
    q = np.array([1.0, 0.1, 0.1, 1.0])  # both children below tau_q
    np.testing.assert_array_equal(aggregate(f, mask, q, params), f)


def test_attention_rows_sum_to_one_over_children():
    rng = np.random.default_rng(5)
    f = rng.normal(size=(4, 6))
    attn, _ = attention_weights(f, build_inclusion_mask(PARENT_AND_CHILDREN), np.ones(4), MgaParams.init(6, rng), 0.3)
    assert attn[0].sum() == pytest.approx(1.0)
    assert attn[0, 3] == 0.0 and attn[0, 0] == 0.0
    np.testing.assert_array_equal(attn[1:], 0.0)


def test_identity_params_manual_value():
    # one parent, one child, identity projections: output = f_p + lam * f_c
    f = np.array([[1.0, 0.0], [0.0, 2.0]])
    mask = np.array([[0, 1], [0, 0]], dtype=np.uint8)
    out = aggregate(f, mask, np.ones(2), MgaParams.identity(2), lam=0.1)
    np.testing.assert_allclose(out, [[1.0, 0.2], [0.0, 2.0]])


def test_gradient_flows_to_attention_weights():
    rng = np.random.default_rng(6)
    f = rng.normal(size=(4, 6))
    p = MgaParams(*(ad.Var(w) for w in MgaParams.init(6, rng).tensors().values()))
    out = aggregate(f, build_inclusion_mask(PARENT_AND_CHILDREN), np.ones(4), p)
    ad.sum(out * out).backward()
    for w in (p.w_q, p.w_k, p.w_v):
        assert np.abs(w.grad).sum() > 0


def test_config_validation():
    with pytest.raises(ValueError):
        MgaConfig(tau_ioc=1.5)
    with pytest.raises(ValueError):
        MgaConfig(lam=-1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 7), st.integers(0, 2 ** 31))
def test_aggregate_permutation_equivariance(n, seed):
    rng = np.random.default_rng(seed)
    base = rng.uniform(0, 200, (n, 2))
    size = rng.uniform(5, 80, (n, 2))
    boxes = np.concatenate([base, base + size], axis=1)
    f = rng.normal(size=(n, 5))
    q = rng.uniform(size=n)
    params = MgaParams.init(5, rng)
    perm = rng.permutation(n)
    a = aggregate(f, build_inclusion_mask(boxes), q, params)
    b = aggregate(f[perm], build_inclusion_mask(boxes[perm]), q[perm], params)
    np.testing.assert_allclose(b, a[perm], rtol=1e-12, atol=1e-12)
