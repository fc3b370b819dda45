"""Parent enhancement from spatially contained child detections.

Boxes that lie mostly inside another box are treated as its children. Each
parent attends over its children (single-head scaled dot-product attention,
parent as query) and adds a small multiple of the attended child features to
its own. Children whose temporal association quality is low are zeroed before
attention; detections without children pass through untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from . import autodiff as ad
from . import kernels


@dataclass(frozen=True)
class MgaConfig:
    tau_ioc: float = 0.8
    tau_q: float = 0.3
    lam: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.tau_ioc <= 1.0:
            raise ValueError(f"tau_ioc must lie in (0, 1], got {self.tau_ioc}")
        if not 0.0 <= self.tau_q <= 1.0:
            raise ValueError(f"tau_q must lie in [0, 1], got {self.tau_q}")
        if self.lam < 0.0:
            raise ValueError(f"lam must be non-negative, got {self.lam}")


@dataclass
class MgaParams:
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray

    @classmethod
    def init(cls, d: int, rng: np.random.Generator) -> "MgaParams":
        bound = 1.0 / math.sqrt(d)
        return cls(*(rng.uniform(-bound, bound, (d, d)) for _ in range(3)))

    @classmethod
    def identity(cls, d: int) -> "MgaParams":
        return cls(np.eye(d), np.eye(d), np.eye(d))

    def tensors(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def build_inclusion_mask(boxes, tau_ioc: float = 0.8) -> np.ndarray:
    """``M[i, j]`` is 1 when box ``j`` lies more than ``tau_ioc`` inside box ``i``."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    mask = (kernels.ioc_matrix(boxes, boxes) > tau_ioc).astype(np.uint8)
    np.fill_diagonal(mask, 0)
    return mask


def taq_scores(f_t, f_prev, alpha: float) -> np.ndarray:
    """Forward-backward association quality of each current detection.

    Composes the softmax from the current to the previous frame with the
    softmax from the previous to the current frame (two separate row
    normalizations). With no previous detections every score is 1.
    """
    f_t = ad.value(f_t)
    n = f_t.shape[0]
    if f_prev is None or ad.value(f_prev).shape[0] == 0:
        return np.ones(n)
    f_prev = ad.value(f_prev)
    sim = f_t @ f_prev.T
    fwd = ad.softmax(alpha * sim, axis=1)
    bwd = ad.softmax(alpha * sim.T, axis=1)
    return np.sum(fwd * bwd.T, axis=1)


def attention_weights(f, mask: np.ndarray, q: np.ndarray, params: MgaParams, tau_q: float):
    """Per-parent attention over children, shape ``(n, n)``; leaf rows are zero.

    Also returns the gated child matrix used for keys and values.
    """
    d = ad.value(f).shape[1]
    gate = (np.asarray(q) > tau_q).astype(np.float64)
    gated = f * gate[:, None]
    queries = f @ ad.transpose(params.w_q)
    keys = gated @ ad.transpose(params.w_k)
    scores = (queries @ ad.transpose(keys)) / math.sqrt(d)
    return ad.masked_softmax(scores, mask.astype(bool)), gated


def aggregate(fused, mask: np.ndarray, q: np.ndarray, params: MgaParams,
              tau_q: float = 0.3, lam: float = 0.1):
    """Enhance parent rows of ``fused``; leaf rows are returned bit-identical."""
    mask = np.asarray(mask)
    has_child = mask.any(axis=1)
    if not has_child.any():
        return fused
    attn, gated = attention_weights(fused, mask, q, params, tau_q)
    values = gated @ ad.transpose(params.w_v)
    enhanced = fused + lam * (attn @ values)
    return ad.where(has_child[:, None], enhanced, fused)
