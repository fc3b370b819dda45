"""Learnable parameter bundle and the shared association-feature pipeline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .mcf import McfConfig, McfParams, adaptive_temperature, mcf_features
from .mga import MgaConfig, MgaParams, aggregate, build_inclusion_mask, taq_scores

GROUPS = {
    "loc_proj": ("mcf", ("loc_w", "loc_b")),
    "sgn": ("mcf", ("sgn_w1", "sgn_b1", "sgn_w2", "sgn_b2")),
    "mfn": ("mcf", ("mfn_w1", "mfn_b1", "mfn_w2", "mfn_b2")),
    "attention": ("mga", ("w_q", "w_k", "w_v")),
}


@dataclass
class ModelParams:
    mcf: McfParams
    mga: MgaParams

    @classmethod
    def init(cls, d: int, h: int, seed: int) -> "ModelParams":
        rng = np.random.default_rng(seed)
        return cls(McfParams.init(d, h, rng), MgaParams.init(d, rng))

    @property
    def dim(self) -> int:
        return self.mcf.dim

    def named_tensors(self) -> dict[str, np.ndarray]:
        """Flat ``{"mcf.loc_w": array, ...}`` view, in a fixed order."""
        out = {f"mcf.{k}": v for k, v in self.mcf.tensors().items()}
        out.update({f"mga.{k}": v for k, v in self.mga.tensors().items()})
        return out

    @classmethod
    def from_named(cls, tensors: dict[str, np.ndarray]) -> "ModelParams":
        mcf = {k[4:]: v for k, v in tensors.items() if k.startswith("mcf.")}
        mga = {k[4:]: v for k, v in tensors.items() if k.startswith("mga.")}
        return cls(McfParams(**mcf), MgaParams(**mga))

    def copy(self) -> "ModelParams":
        return ModelParams.from_named({k: np.array(ad.value(v), copy=True) for k, v in self.named_tensors().items()})


@dataclass
class FrameInputs:
    """Per-frame arrays consumed by the feature pipeline."""

    app: np.ndarray
    raw_loc: np.ndarray
    sem: np.ndarray
    boxes: np.ndarray

    def __len__(self):
        return self.app.shape[0]

    @classmethod
    def from_detections(cls, dets) -> "FrameInputs":
        if not dets:
            return cls(np.zeros((0, 0)), np.zeros((0, 4)), np.zeros((0, 0)), np.zeros((0, 4)))
        return cls(
            np.stack([d.app for d in dets]),
            np.stack([d.raw_loc for d in dets]),
            np.stack([d.sem for d in dets]),
            np.array([d.box.as_list() for d in dets], dtype=np.float64),
        )


def multi_cue(curr: FrameInputs, ref: FrameInputs | None, params: ModelParams, mcf_cfg: McfConfig):
    """Multi-cue features of ``curr`` with ``ref`` as the temporal reference frame."""
    has_ref = ref is not None and len(ref) > 0
    fused, _, _ = mcf_features(
        curr.app, curr.raw_loc, curr.sem,
        ref.app if has_ref else None,
        ref.raw_loc if has_ref else None,
        ref.sem if has_ref else None,
        params.mcf, mcf_cfg,
    )
    return fused


def enhance(boxes: np.ndarray, fused, ref_fused, params: ModelParams,
            mcf_cfg: McfConfig, mga_cfg: MgaConfig):
    """Parent enhancement; child quality is scored against ``ref_fused``."""
    mask = build_inclusion_mask(boxes, mga_cfg.tau_ioc)
    if not mask.any():
        return fused
    n = ad.value(fused).shape[0]
    if ref_fused is not None and ad.value(ref_fused).shape[0] > 0:
        alpha = adaptive_temperature(n, ad.value(ref_fused).shape[0], mcf_cfg.temperature)
        q = taq_scores(fused, ref_fused, alpha)
    else:
        q = np.ones(n)
    return aggregate(fused, mask, q, params.mga, mga_cfg.tau_q, mga_cfg.lam)


def association_features(curr: FrameInputs, prev: FrameInputs | None, prev_fused,
                         params: ModelParams, mcf_cfg: McfConfig, mga_cfg: MgaConfig):
    """Multi-cue features then parent enhancement for one frame.

    ``prev_fused`` is the previous frame's pre-enhancement feature matrix,
    used for the child-quality scores. Returns ``(fused, assoc_feats)``; both
    are tape nodes when ``params`` holds tape variables.
    """
    fused = multi_cue(curr, prev, params, mcf_cfg)
    return fused, enhance(curr.boxes, fused, prev_fused, params, mcf_cfg, mga_cfg)
