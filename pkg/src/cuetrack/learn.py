"""Training of the fusion and attention weights under the association loss.

For a pair of adjacent frames both feature matrices are computed with the
other frame as temporal reference, the row softmax of their dot-product
similarity is compared with the ground-truth association matrix, and the
negative log-likelihood of the true matches is minimized with Adam.

The child-quality gate inside parent enhancement is a hard threshold and is
treated as a constant for differentiation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .mcf import McfConfig
from .mga import MgaConfig
from .model import FrameInputs, ModelParams, enhance, multi_cue
from .simgen import TrainingPair

logger = logging.getLogger(__name__)

LOG_EPS = 1e-12


@dataclass(frozen=True)
class LearnConfig:
    lr: float = 1e-3
    epochs: int = 10
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0 or self.epochs < 0:
            raise ValueError("lr must be positive and epochs non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1) or self.eps <= 0:
            raise ValueError("invalid Adam hyperparameters")


@dataclass
class PreparedPair:
    prev: FrameInputs
    curr: FrameInputs
    y: np.ndarray

    @classmethod
    def from_pair(cls, pair: TrainingPair) -> "PreparedPair":
        return cls(FrameInputs.from_detections(pair.prev.detections),
                   FrameInputs.from_detections(pair.curr.detections),
                   np.asarray(pair.y, dtype=np.float64))


def _prepare(pair) -> PreparedPair:
    return pair if isinstance(pair, PreparedPair) else PreparedPair.from_pair(pair)


def pair_features(pair: PreparedPair, params: ModelParams, mcf_cfg: McfConfig, mga_cfg: MgaConfig):
    """Association features ``(F_curr, F_prev)`` for both frames of a pair."""
    m_prev = multi_cue(pair.prev, pair.curr, params, mcf_cfg)
    m_curr = multi_cue(pair.curr, pair.prev, params, mcf_cfg)
    ad.check_finite(m_prev, "fused[prev]")
    ad.check_finite(m_curr, "fused[curr]")
    f_prev = enhance(pair.prev.boxes, m_prev, m_curr, params, mcf_cfg, mga_cfg)
    f_curr = enhance(pair.curr.boxes, m_curr, m_prev, params, mcf_cfg, mga_cfg)
    ad.check_finite(f_prev, "assoc_feats[prev]")
    ad.check_finite(f_curr, "assoc_feats[curr]")
    return f_curr, f_prev


def loss_from_features(f_curr, f_prev, y: np.ndarray):
    """``-sum(Y * log(softmax_rows(F_curr F_prev^T) + 1e-12))``."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (ad.value(f_curr).shape[0], ad.value(f_prev).shape[0]):
        raise ValueError(f"label shape {y.shape} does not match the frame sizes")
    probs = ad.softmax(f_curr @ ad.transpose(f_prev), axis=1)
    ad.check_finite(probs, "similarity_softmax")
    return -ad.sum(y * ad.log(probs + LOG_EPS))


def association_loss(pair, params: ModelParams, mcf_cfg: McfConfig = McfConfig(),
                     mga_cfg: MgaConfig = MgaConfig()) -> float:
    pair = _prepare(pair)
    if len(pair.prev) == 0 or len(pair.curr) == 0:
        raise ValueError("both frames of a training pair need detections")
    f_curr, f_prev = pair_features(pair, params, mcf_cfg, mga_cfg)
    return float(loss_from_features(f_curr, f_prev, pair.y))


def _as_vars(params: ModelParams) -> ModelParams:
    return ModelParams.from_named({k: ad.Var(ad.value(v), name=k) for k, v in params.named_tensors().items()})


def gradients(pair, params: ModelParams, mcf_cfg: McfConfig = McfConfig(),
              mga_cfg: MgaConfig = MgaConfig()) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and exact gradients, keyed like :meth:`ModelParams.named_tensors`.

    Parameters without a path to the loss get exactly-zero gradients.
    """
    pair = _prepare(pair)
    if len(pair.prev) == 0 or len(pair.curr) == 0:
        raise ValueError("both frames of a training pair need detections")
    vparams = _as_vars(params)
    f_curr, f_prev = pair_features(pair, vparams, mcf_cfg, mga_cfg)
    loss = loss_from_features(f_curr, f_prev, pair.y)
    named = vparams.named_tensors()
    if isinstance(loss, ad.Var):
        loss.backward()
        loss_value = float(loss.value)
    else:
        loss_value = float(loss)
    grads = {k: (v.grad.copy() if v.grad is not None else np.zeros_like(v.value)) for k, v in named.items()}
    return loss_value, grads


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ModelParams, cfg: LearnConfig = LearnConfig()) -> "AdamState":
        named = params.named_tensors()
        return cls(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, 0,
                   {k: np.zeros_like(v) for k, v in named.items()},
                   {k: np.zeros_like(v) for k, v in named.items()})


def optimizer_step(params: ModelParams, grads: dict[str, np.ndarray], state: AdamState) -> ModelParams:
    """One bias-corrected Adam update; mutates ``state`` and returns new params."""
    named = params.named_tensors()
    if set(grads) != set(named):
        raise ValueError("gradient keys do not match the parameters")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    updated = {}
    for k, p in named.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {k} {p.shape}")
        m = state.m.setdefault(k, np.zeros_like(p))
        v = state.v.setdefault(k, np.zeros_like(p))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        updated[k] = p - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return ModelParams.from_named(updated)


def train(pairs: Sequence, mcf_cfg: McfConfig = McfConfig(), mga_cfg: MgaConfig = MgaConfig(),
          cfg: LearnConfig = LearnConfig(), params: ModelParams | None = None,
          ) -> tuple[ModelParams, list[float]]:
    """Adam over shuffled pairs; returns trained params and per-epoch mean loss."""
    prepared = [_prepare(p) for p in pairs]
    prepared = [p for p in prepared if len(p.prev) and len(p.curr)]
    if not prepared:
        raise ValueError("training needs at least one non-empty pair")
    if params is None:
        params = ModelParams.init(mcf_cfg.d, mcf_cfg.hidden, cfg.seed)
    state = AdamState.for_params(params, cfg)
    rng = np.random.default_rng(cfg.seed + 1)
    curve = []
    for epoch in range(cfg.epochs):
        total = 0.0
        for idx in rng.permutation(len(prepared)):
            loss, grads = gradients(prepared[idx], params, mcf_cfg, mga_cfg)
            total += loss
            params = optimizer_step(params, grads, state)
        curve.append(total / len(prepared))
        logger.info("epoch %d mean loss %.6f", epoch, curve[-1])
    return params, curve
