"""Temporal confidence propagation for flickering detections.

Low-confidence detections in the current frame borrow confidence from
high-confidence detections of the same predicted class in the previous frame.
Each (source, candidate) edge is weighted by association-feature cosine
similarity plus a box-overlap term; the amount borrowed depends on how many
same-class sources there are and how strong their mean edge weight is.
Candidates whose boosted score clears the high threshold are recovered.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels

DEFAULT_TIERS = ((0.8, 4, 0.7), (0.6, 3, 0.5), (0.5, 2, 0.3))
# the same tiers when "exceed K sources" is read as count >= K
LENIENT_TIERS = ((0.8, 3, 0.7), (0.6, 2, 0.5), (0.5, 1, 0.3))


@dataclass(frozen=True)
class TcpConfig:
    """Thresholds and propagation tiers.

    A tier ``(min_mean_w, min_count, eta)`` applies when the mean edge weight
    is strictly above ``min_mean_w`` and there are at least ``min_count``
    same-class sources. The first matching tier wins; otherwise eta is 0.
    """

    tau_high: float = 0.5
    tau_low: float = 0.05
    beta: float = 0.3
    candidate_cap: int = 50
    nms_iou: float = 0.5
    tiers: tuple[tuple[float, int, float], ...] = DEFAULT_TIERS

    def __post_init__(self):
        if not 0.0 <= self.tau_low < self.tau_high <= 1.0:
            raise ValueError(f"need 0 <= tau_low < tau_high <= 1, got {self.tau_low}, {self.tau_high}")
        if self.beta < 0.0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        if self.candidate_cap < 0:
            raise ValueError("candidate_cap must be non-negative")
        tiers = tuple((float(w), int(c), float(e)) for w, c, e in self.tiers)
        object.__setattr__(self, "tiers", tiers)
        for w, c, e in tiers:
            if not 0.0 <= e <= 1.0 or c < 0:
                raise ValueError(f"invalid tier {(w, c, e)}")
        for (w0, c0, e0), (w1, c1, e1) in zip(tiers, tiers[1:]):
            if not (w0 > w1 and c0 > c1 and e0 > e1):
                raise ValueError("tiers must be sorted strictly from strongest to weakest")


@dataclass
class DetectionSet:
    """Column-oriented detections with their association features."""

    boxes: np.ndarray  # (n, 4)
    scores: np.ndarray  # (n,)
    class_ids: np.ndarray  # (n,)
    features: np.ndarray  # (n, d)
    index: np.ndarray = field(default=None)  # positions in the originating frame

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.class_ids = np.asarray(self.class_ids, dtype=np.int64)
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim == 1:
            self.features = self.features.reshape(len(self.scores), -1)
        if self.index is None:
            self.index = np.arange(len(self.scores))
        self.index = np.asarray(self.index, dtype=np.intp)

    def __len__(self):
        return len(self.scores)

    def take(self, idx) -> "DetectionSet":
        idx = np.asarray(idx, dtype=np.intp)
        return DetectionSet(self.boxes[idx], self.scores[idx], self.class_ids[idx],
                            self.features[idx], self.index[idx])


@dataclass
class BipartiteEdges:
    w_asso: np.ndarray  # (n_sources, n_candidates)
    w_iou: np.ndarray
    w: np.ndarray


def _rank(boxes: np.ndarray, scores: np.ndarray) -> np.ndarray:
    return kernels.nms_order(boxes, scores)


def select_sources(prev: DetectionSet, cfg: TcpConfig = TcpConfig()) -> DetectionSet:
    """NMS at ``cfg.nms_iou`` then keep scores strictly above ``tau_high``."""
    if len(prev) == 0:
        return prev
    keep = kernels.nms(prev.boxes, prev.scores, cfg.nms_iou)
    keep = keep[prev.scores[keep] > cfg.tau_high]
    return prev.take(keep)


def select_candidates(curr: DetectionSet, cfg: TcpConfig = TcpConfig()) -> DetectionSet:
    """Scores in ``[tau_low, tau_high]``, best first, at most ``candidate_cap``."""
    in_band = (curr.scores >= cfg.tau_low) & (curr.scores <= cfg.tau_high)
    idx = np.nonzero(in_band)[0]
    order = idx[_rank(curr.boxes[idx], curr.scores[idx])]
    return curr.take(order[: cfg.candidate_cap])


def cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarity; pairs with a zero-norm vector get 0."""
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    denom = na[:, None] * nb[None, :]
    dots = a @ b.T
    return np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)


def edge_weights(sources: DetectionSet, candidates: DetectionSet, beta: float = 0.3) -> BipartiteEdges:
    w_asso = np.clip(cosine_matrix(sources.features, candidates.features), -1.0, 1.0)
    w_iou = kernels.iou_matrix(sources.boxes, candidates.boxes)
    return BipartiteEdges(w_asso, w_iou, w_asso + beta * w_iou)


def propagation_strength(mean_w: float, count: int, cfg: TcpConfig = TcpConfig()) -> float:
    if count <= 0:
        return 0.0
    for min_w, min_count, eta in cfg.tiers:
        if mean_w > min_w and count >= min_count:
            return eta
    return 0.0


def propagate(candidates: DetectionSet, sources: DetectionSet, edges: BipartiteEdges,
              cfg: TcpConfig = TcpConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Adjusted candidate scores and the propagation strength used for each.

    Adjusted scores are never below the originals.
    """
    adjusted = candidates.scores.copy()
    etas = np.zeros(len(candidates))
    for j in range(len(candidates)):
        same = np.nonzero(sources.class_ids == candidates.class_ids[j])[0]
        if same.size == 0:
            continue
        w = edges.w[same, j]
        total = w.sum()
        if total <= 0.0:
            continue
        eta = propagation_strength(float(w.mean()), int(same.size), cfg)
        if eta == 0.0:
            continue
        borrowed = float((w * sources.scores[same]).sum() / total)
        s_j = candidates.scores[j]
        adjusted[j] = max((1.0 - eta) * s_j + eta * borrowed, s_j)
        etas[j] = eta
    return adjusted, etas


def recover(candidates: DetectionSet, adjusted: np.ndarray, cfg: TcpConfig = TcpConfig()) -> DetectionSet:
    """Candidates whose adjusted score clears ``tau_high``, carrying that score."""
    hit = np.nonzero(np.asarray(adjusted) > cfg.tau_high)[0]
    out = candidates.take(hit)
    out.scores = np.asarray(adjusted, dtype=np.float64)[hit].copy()
    return out


def run_tcp(sources: DetectionSet, curr: DetectionSet, cfg: TcpConfig = TcpConfig()) -> DetectionSet:
    """Full propagation pass for one frame; returns the recovered detections."""
    candidates = select_candidates(curr, cfg)
    if len(sources) == 0 or len(candidates) == 0:
        return candidates.take([])
    edges = edge_weights(sources, candidates, cfg.beta)
    adjusted, _ = propagate(candidates, sources, edges, cfg)
    return recover(candidates, adjusted, cfg)
