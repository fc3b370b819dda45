"""Multi-cue adaptive fusion.

Each detection carries appearance, location and semantic embeddings. A small
gating network scores how much to trust the location and semantic cues within
the frame, forward-backward (cycle) matching against the previous frame
scores how stable each cue is over time, and a fusion network merges the
gated cues. The result is blended back with the raw appearance embedding
according to how temporally stable appearance itself is.

All array functions accept numpy arrays or :class:`~cuetrack.autodiff.Var`
nodes, so the training code reuses them unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .core import Detection, FeatureBundle

FUSION_MODES = ("adaptive", "sum")


@dataclass(frozen=True)
class TemperatureConfig:
    delta: float = 0.5
    epsilon: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class McfConfig:
    d: int = 256
    h: int | None = None  # hidden width of both small networks; None -> d
    temperature: TemperatureConfig = TemperatureConfig()
    fusion: str = "adaptive"

    def __post_init__(self):
        if self.d < 2:
            raise ValueError(f"embedding dimension must be >= 2, got {self.d}")
        if self.h is not None and self.h < 1:
            raise ValueError(f"hidden width must be >= 1, got {self.h}")
        if self.fusion not in FUSION_MODES:
            raise ValueError(f"fusion must be one of {FUSION_MODES}, got {self.fusion!r}")

    @property
    def hidden(self) -> int:
        return self.d if self.h is None else self.h


@dataclass
class McfParams:
    """Learnable weights. Affine layers are stored as ``(out, in)`` matrices."""

    loc_w: np.ndarray
    loc_b: np.ndarray
    sgn_w1: np.ndarray
    sgn_b1: np.ndarray
    sgn_w2: np.ndarray
    sgn_b2: np.ndarray
    mfn_w1: np.ndarray
    mfn_b1: np.ndarray
    mfn_w2: np.ndarray
    mfn_b2: np.ndarray

    @classmethod
    def init(cls, d: int, h: int, rng: np.random.Generator) -> "McfParams":
        """Uniform ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` initialization."""

        def layer(n_out, n_in):
            bound = 1.0 / math.sqrt(n_in)
            return rng.uniform(-bound, bound, (n_out, n_in)), rng.uniform(-bound, bound, n_out)

        loc_w, loc_b = layer(d, 4)
        sgn_w1, sgn_b1 = layer(h, 3 * d)
        sgn_w2, sgn_b2 = layer(2, h)
        mfn_w1, mfn_b1 = layer(h, 3 * d)
        mfn_w2, mfn_b2 = layer(d, h)
        return cls(loc_w, loc_b, sgn_w1, sgn_b1, sgn_w2, sgn_b2, mfn_w1, mfn_b1, mfn_w2, mfn_b2)

    @classmethod
    def zeros(cls, d: int, h: int) -> "McfParams":
        return cls(
            np.zeros((d, 4)), np.zeros(d),
            np.zeros((h, 3 * d)), np.zeros(h), np.zeros((2, h)), np.zeros(2),
            np.zeros((h, 3 * d)), np.zeros(h), np.zeros((d, h)), np.zeros(d),
        )

    @property
    def dim(self) -> int:
        return int(ad.value(self.loc_w).shape[0])

    @property
    def hidden(self) -> int:
        return int(ad.value(self.sgn_w1).shape[0])

    def tensors(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class CueConfidences:
    """Per-detection gate values; every array has one entry per detection."""

    intra_loc: np.ndarray
    intra_sem: np.ndarray
    inter_app: np.ndarray
    inter_loc: np.ndarray
    inter_sem: np.ndarray


@dataclass
class McfOutput:
    features: np.ndarray  # (n, d) refined multi-cue features
    confidences: CueConfidences
    loc: np.ndarray  # (n, d) projected location embeddings


def adaptive_temperature(n: int, m: int, cfg: TemperatureConfig = TemperatureConfig()) -> float:
    """Softmax sharpness that grows with the number of objects to discriminate."""
    if n < 1 or m < 1:
        raise ValueError(f"object counts must be >= 1, got n={n}, m={m}")
    return math.log(cfg.delta / (1.0 - cfg.delta) * max(n, m)) / cfg.epsilon


def _affine(x, w, b):
    return x @ ad.transpose(w) + b


def location_embedding(raw_loc, params: McfParams):
    """Project normalized boxes ``(n, 4)`` into the embedding space."""
    return _affine(raw_loc, params.loc_w, params.loc_b)


def gate_scores(app, loc, sem, params: McfParams):
    """Intra-frame confidences for a batch, shape ``(n, 2)``: (loc, sem)."""
    x = ad.concat([app, loc, sem], axis=1)
    hidden = ad.relu(_affine(x, params.sgn_w1, params.sgn_b1))
    return ad.sigmoid(_affine(hidden, params.sgn_w2, params.sgn_b2))


def intra_confidence(bundle: FeatureBundle, params: McfParams) -> tuple[float, float]:
    if bundle.dim != params.dim:
        raise ValueError(f"feature dimension {bundle.dim} does not match parameters ({params.dim})")
    g = gate_scores(bundle.app[None, :], bundle.loc[None, :], bundle.sem[None, :], params)
    return float(g[0, 0]), float(g[0, 1])


def cycle_confidence(e_t, e_prev, alpha: float):
    """Diagonal of ``S S^T`` where ``S`` is the row softmax of ``alpha * E_t E_prev^T``.

    Each entry is the squared norm of a probability row over ``m`` previous
    objects and therefore lies in ``[1/m, 1]``.
    """
    if ad.value(e_t).shape[1] != ad.value(e_prev).shape[1]:
        raise ValueError("current and previous feature matrices differ in dimension")
    probs = ad.softmax(alpha * (e_t @ ad.transpose(e_prev)), axis=1)
    return ad.sum(probs * probs, axis=1)


def fusion_network(x, params: McfParams):
    hidden = ad.relu(_affine(x, params.mfn_w1, params.mfn_b1))
    return _affine(hidden, params.mfn_w2, params.mfn_b2)


def fuse_batch(app, loc, sem, gate_loc, gate_sem, params: McfParams):
    """Scale location/semantic rows by their combined gates, then fuse."""
    loc_t = loc * ad.column(gate_loc)
    sem_t = sem * ad.column(gate_sem)
    return fusion_network(ad.concat([app, loc_t, sem_t], axis=1), params)


def fuse(bundle: FeatureBundle, conf: CueConfidences, params: McfParams) -> np.ndarray:
    """Fused feature for one detection; ``conf`` holds scalars for it."""
    if bundle.dim != params.dim:
        raise ValueError(f"feature dimension {bundle.dim} does not match parameters ({params.dim})")
    gl = np.atleast_1d(np.asarray(conf.intra_loc, dtype=float) * np.asarray(conf.inter_loc, dtype=float))
    gs = np.atleast_1d(np.asarray(conf.intra_sem, dtype=float) * np.asarray(conf.inter_sem, dtype=float))
    out = fuse_batch(bundle.app[None, :], bundle.loc[None, :], bundle.sem[None, :], gl, gs, params)
    return out[0]


def refine(cue_mix, app, app_conf):
    """Convex blend: ``c * app + (1 - c) * cue_mix``; ``c`` may be per-row."""
    c = app_conf
    if np.ndim(ad.value(c)) == 1 and np.ndim(ad.value(app)) == 2:
        c = ad.column(c)
    return c * app + (1.0 - c) * cue_mix


def mcf_features(app, raw_loc, sem, prev_app, prev_raw_loc, prev_sem, params: McfParams, cfg: McfConfig):
    """Batched forward pass; returns ``(features, confidences-dict, loc)``.

    ``prev_*`` may be ``None`` or have zero rows, in which case every
    inter-frame confidence is 1.
    """
    n = ad.value(app).shape[0]
    loc = location_embedding(raw_loc, params)
    m = 0 if prev_app is None else ad.value(prev_app).shape[0]
    if cfg.fusion == "sum":
        ones = np.ones(n)
        conf = dict(intra_loc=ones, intra_sem=ones, inter_app=ones, inter_loc=ones, inter_sem=ones)
        return app + loc + sem, conf, loc

    gates = gate_scores(app, loc, sem, params)
    intra_loc, intra_sem = gates[:, 0], gates[:, 1]
    if m == 0:
        ones = np.ones(n)
        inter_app = inter_loc = inter_sem = ones
    else:
        alpha = adaptive_temperature(n, m, cfg.temperature)
        prev_loc = location_embedding(prev_raw_loc, params)
        inter_app = cycle_confidence(app, prev_app, alpha)
        inter_loc = cycle_confidence(loc, prev_loc, alpha)
        inter_sem = cycle_confidence(sem, prev_sem, alpha)
    cue_mix = fuse_batch(app, loc, sem, intra_loc * inter_loc, intra_sem * inter_sem, params)
    feats = refine(cue_mix, app, inter_app)
    conf = dict(
        intra_loc=intra_loc, intra_sem=intra_sem,
        inter_app=inter_app, inter_loc=inter_loc, inter_sem=inter_sem,
    )
    return feats, conf, loc


def stack_inputs(dets: Sequence[Detection]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(app, raw_loc, sem)`` matrices for a detection list."""
    if not dets:
        return np.zeros((0, 0)), np.zeros((0, 4)), np.zeros((0, 0))
    app = np.stack([d.app for d in dets])
    raw = np.stack([d.raw_loc for d in dets])
    sem = np.stack([d.sem for d in dets])
    return app, raw, sem


def mcf_forward(
    dets: Sequence[Detection],
    prev_dets: Sequence[Detection],
    params: McfParams,
    cfg: McfConfig = McfConfig(),
) -> McfOutput:
    if not dets:
        empty = np.zeros(0)
        return McfOutput(np.zeros((0, params.dim)), CueConfidences(*(empty,) * 5), np.zeros((0, params.dim)))
    app, raw, sem = stack_inputs(dets)
    if app.shape[1] != params.dim:
        raise ValueError(f"feature dimension {app.shape[1]} does not match parameters ({params.dim})")
    p_app, p_raw, p_sem = stack_inputs(prev_dets) if prev_dets else (None, None, None)
    feats, conf, loc = mcf_features(app, raw, sem, p_app, p_raw, p_sem, params, cfg)
    conf = {k: np.broadcast_to(np.asarray(v, dtype=np.float64), (len(dets),)).copy() for k, v in conf.items()}
    return McfOutput(np.asarray(feats), CueConfidences(**conf), np.asarray(loc))
