import math

import numpy as np
import pytest

from cuetrack import autodiff as ad
from cuetrack.gradcheck import check_entries, group_entries
from cuetrack.learn import (AdamState, LearnConfig, PreparedPair, association_loss, gradients, loss_from_features,
                            optimizer_step, train)
from cuetrack.mcf import McfConfig
from cuetrack.mga import MgaConfig
from cuetrack.model import GROUPS, ModelParams
from cuetrack.simgen import ScenarioConfig, generate, to_training_pairs

D = 8


def pairs(**kw):
    cfg = dict(dim=D, num_objects=3, num_frames=6, embed_scale=1.0, flicker_prob=0.0)
    cfg.update(kw)
    frames, truth = generate(ScenarioConfig(**cfg))
    return to_training_pairs(frames, truth)


def test_loss_hand_example():
    f_curr = np.array([[1.0, 0.0]])
    f_prev = np.array([[1.0, 0.0], [0.0, 1.0]])
    loss = loss_from_features(f_curr, f_prev, np.array([[1.0, 0.0]]))
    assert float(loss) == pytest.approx(math.log1p(math.exp(-1.0)), abs=1e-11)


def test_loss_ignores_unmatched_rows():
    f = np.eye(2)
    assert float(loss_from_features(f, f, np.zeros((2, 2)))) == 0.0
    with pytest.raises(ValueError):
        loss_from_features(f, f, np.zeros((3, 2)))


def test_gradients_match_finite_differences_on_a_small_pair():
    pair = PreparedPair.from_pair(pairs(child_prob=1.0, num_objects=2)[0])
    params = ModelParams.init(D, D, 1)
    cfg_m, cfg_a = McfConfig(d=D), MgaConfig()
    loss, grads = gradients(pair, params, cfg_m, cfg_a)
    assert loss == pytest.approx(association_loss(pair, params, cfg_m, cfg_a), rel=1e-12)
    rng = np.random.default_rng(0)
    for group in GROUPS:
        entries = group_entries(params, group)
        picks = [entries[i] for i in rng.choice(len(entries), 15, replace=False)]
        checks = check_entries(lambda p: association_loss(pair, p, cfg_m, cfg_a), params, grads, picks)
        bad = [c for c in checks if not c.ok()]
        assert not bad, bad[:3]


def test_attention_gradients_are_zero_without_children():
    pair = pairs(child_prob=0.0)[0]
    _, grads = gradients(pair, ModelParams.init(D, D, 2), McfConfig(d=D))
    for key in ("mga.w_q", "mga.w_k", "mga.w_v"):
        assert np.all(grads[key] == 0.0)
    assert np.abs(grads["mcf.mfn_w2"]).sum() > 0


def test_sum_fusion_has_gradients_only_for_location():
    pair = pairs()[0]
    _, grads = gradients(pair, ModelParams.init(D, D, 3), McfConfig(d=D, fusion="sum"))
    assert np.abs(grads["mcf.loc_w"]).sum() > 0
    assert np.all(grads["mcf.sgn_w1"] == 0.0) and np.all(grads["mcf.mfn_w1"] == 0.0)


def _adam_scalar(p, gs, lr=0.1, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(gs, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    return p


def test_adam_matches_scalar_reference():
    params = ModelParams.init(2, 2, 0)
    start = {k: v.copy() for k, v in params.named_tensors().items()}
    state = AdamState.for_params(params, LearnConfig(lr=0.1))
    seq = [2.0, -1.0, 0.5]
    for g in seq:
        params = optimizer_step(params, {k: np.full_like(v, g) for k, v in start.items()}, state)
    got = params.named_tensors()["mcf.loc_w"]
    ref = np.vectorize(lambda p: _adam_scalar(p, seq))(start["mcf.loc_w"])
    np.testing.assert_allclose(got, ref, rtol=0, atol=1e-15)
    # first step moves every entry by lr (up to eps)
    one = optimizer_step(ModelParams.init(2, 2, 0), {k: np.full_like(v, 2.0) for k, v in start.items()},
                         AdamState.for_params(params, LearnConfig(lr=0.1)))
    np.testing.assert_allclose(one.named_tensors()["mga.w_q"], start["mga.w_q"] - 0.1, atol=1e-8)


def test_optimizer_rejects_mismatched_gradients():
    params = ModelParams.init(2, 2, 0)
    with pytest.raises(ValueError):
        optimizer_step(params, {"mcf.loc_w": np.zeros((2, 4))}, AdamState.for_params(params))


def test_training_reduces_loss_and_is_deterministic():
    data = pairs(num_objects=4, num_frames=12, sigma_app=0.5, sigma_sem=0.5)
    cfg = LearnConfig(epochs=5, lr=1e-2)
    p1, c1 = train(data, McfConfig(d=D), MgaConfig(), cfg)
    p2, c2 = train(data, McfConfig(d=D), MgaConfig(), cfg)
    assert c1[-1] < c1[0]
    assert c1 == c2
    for k, v in p1.named_tensors().items():
        np.testing.assert_array_equal(v, p2.named_tensors()[k])


def test_nonfinite_parameters_are_reported_by_name():
    params = ModelParams.init(D, D, 0)
    params.mcf.mfn_w2[0, 0] = np.nan
    with pytest.raises(ad.NonFiniteError, match="fused"):
        gradients(pairs()[0], params, McfConfig(d=D))


def test_training_needs_data():
    with pytest.raises(ValueError):
        train([], McfConfig(d=D))
