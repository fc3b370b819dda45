"""Frame loop: features, flicker recovery, matching and track lifecycle."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import autodiff as ad
from . import kernels
from .core import BoundingBox, Frame
from .mcf import McfConfig
from .mga import MgaConfig
from .model import FrameInputs, ModelParams, association_features
from .tcp import DetectionSet, TcpConfig, run_tcp, select_sources

MATCHING_MODES = ("greedy", "optimal")
MEMORY_MODES = ("mean", "max")


class FrameOrderError(ValueError):
    pass


@dataclass(frozen=True)
class TrackerConfig:
    match_threshold: float = 0.35
    memory_len: int = 30
    max_detections: int = 80
    max_misses: int = 30
    nms_iou: float = 0.5
    matching: str = "greedy"
    memory_mode: str = "mean"

    def __post_init__(self):
        if not 0.0 < self.match_threshold < 1.0:
            raise ValueError(f"match_threshold must lie in (0, 1), got {self.match_threshold}")
        for name in ("memory_len", "max_detections", "max_misses"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.matching not in MATCHING_MODES:
            raise ValueError(f"matching must be one of {MATCHING_MODES}")
        if self.memory_mode not in MEMORY_MODES:
            raise ValueError(f"memory_mode must be one of {MEMORY_MODES}")


@dataclass
class Track:
    track_id: int
    memory: deque
    last_box: BoundingBox
    class_id: int
    last_seen: int
    score: float
    misses: int = 0

    @classmethod
    def start(cls, track_id, feature, box, class_id, frame_id, score, memory_len) -> "Track":
        memory = deque([np.asarray(feature, dtype=np.float64)], maxlen=memory_len)
        return cls(track_id, memory, box, int(class_id), frame_id, float(score))


@dataclass
class TrackRecord:
    track_id: int
    box: list[float]
    class_id: int
    score: float
    recovered: bool


@dataclass
class TrackFrame:
    frame_id: int
    tracks: list[TrackRecord]


@dataclass
class FrameResult(TrackFrame):
    detections: DetectionSet | None = None  # high-confidence plus recovered
    recovered: np.ndarray | None = None  # bool per row of ``detections``


def track_representative(track: Track) -> np.ndarray:
    """Mean of the memory queue, scaled to unit length unless it is zero."""
    if not track.memory:
        raise ValueError(f"track {track.track_id} has an empty memory")
    mean = np.mean(np.stack(track.memory), axis=0)
    norm = np.linalg.norm(mean)
    return mean / norm if norm > 0 else mean


def bisoftmax_similarity(f_det: np.ndarray, f_trk: np.ndarray) -> np.ndarray:
    """Average of the row softmax and column softmax of the dot-product matrix."""
    raw = np.asarray(f_det) @ np.asarray(f_trk).T
    return bisoftmax_from_raw(raw)


def bisoftmax_from_raw(raw: np.ndarray) -> np.ndarray:
    return 0.5 * (ad.softmax(raw, axis=1) + ad.softmax(raw, axis=0))


def match(sim: np.ndarray, threshold: float) -> list[tuple[int, int]]:
    """Greedy global-maximum assignment of rows to columns above ``threshold``."""
    return [(int(r), int(c)) for r, c in kernels.greedy_assign(sim, threshold)]


def match_optimal(sim: np.ndarray, threshold: float) -> list[tuple[int, int]]:
    """Maximum-total assignment, keeping only pairs above ``threshold``."""
    sim = np.asarray(sim, dtype=np.float64)
    if sim.size == 0:
        return []
    rows, cols = linear_sum_assignment(sim, maximize=True)
    return sorted((int(r), int(c)) for r, c in zip(rows, cols) if sim[r, c] > threshold)


@dataclass
class TrackerState:
    tracks: list[Track] = field(default_factory=list)
    next_id: int = 0
    last_frame_id: int | None = None
    prev_inputs: FrameInputs | None = None
    prev_fused: np.ndarray | None = None
    sources: DetectionSet | None = None


class Tracker:
    """Stateful per-sequence tracker; feed frames in increasing ``frame_id``."""

    def __init__(self, params: ModelParams, mcf: McfConfig = McfConfig(), mga: MgaConfig = MgaConfig(),
                 tcp: TcpConfig = TcpConfig(), tracker: TrackerConfig = TrackerConfig()):
        self.params = params
        self.mcf_cfg = mcf
        self.mga_cfg = mga
        self.tcp_cfg = tcp
        self.cfg = tracker
        self.state = TrackerState()

    @classmethod
    def from_config(cls, params: ModelParams, config) -> "Tracker":
        return cls(params, config.mcf, config.mga, config.tcp, config.tracker)

    def _filter(self, frame: Frame):
        dets = [d for d in frame.detections if d.score >= self.tcp_cfg.tau_low]
        if not dets:
            return []
        boxes = np.array([d.box.as_list() for d in dets])
        scores = np.array([d.score for d in dets])
        keep = kernels.nms(boxes, scores, self.cfg.nms_iou)[: self.cfg.max_detections]
        return [dets[i] for i in np.sort(keep)]

    def _similarity(self, feats: np.ndarray, tracks: list[Track]) -> np.ndarray:
        if self.cfg.memory_mode == "mean":
            reps = np.stack([track_representative(t) for t in tracks])
            return bisoftmax_similarity(feats, reps)
        raw = np.empty((feats.shape[0], len(tracks)))
        for k, t in enumerate(tracks):
            mem = np.stack(t.memory)
            norms = np.linalg.norm(mem, axis=1, keepdims=True)
            mem = np.divide(mem, norms, out=np.zeros_like(mem), where=norms > 0)
            raw[:, k] = (feats @ mem.T).max(axis=1)
        return bisoftmax_from_raw(raw)

    def step(self, frame: Frame) -> FrameResult:
        st = self.state
        if st.last_frame_id is not None and frame.frame_id <= st.last_frame_id:
            raise FrameOrderError(f"frame_id {frame.frame_id} does not follow {st.last_frame_id}")

        dets = self._filter(frame)
        inputs = FrameInputs.from_detections(dets)
        if dets:
            fused, assoc_feats = association_features(
                inputs, st.prev_inputs, st.prev_fused, self.params, self.mcf_cfg, self.mga_cfg)
            fused, assoc_feats = np.asarray(fused), np.asarray(assoc_feats)
        else:
            fused = assoc_feats = np.zeros((0, self.params.dim))
        curr = DetectionSet(inputs.boxes, [d.score for d in dets], [d.class_id for d in dets], assoc_feats)

        high = np.nonzero(curr.scores > self.tcp_cfg.tau_high)[0]
        recovered_set = None
        if st.sources is not None and len(st.sources) and self.tcp_cfg.tiers:
            recovered_set = run_tcp(st.sources, curr, self.tcp_cfg)
        active = curr.take(high)
        is_recovered = np.zeros(len(high), dtype=bool)
        if recovered_set is not None and len(recovered_set):
            active = DetectionSet(
                np.vstack([active.boxes, recovered_set.boxes]),
                np.concatenate([active.scores, recovered_set.scores]),
                np.concatenate([active.class_ids, recovered_set.class_ids]),
                np.vstack([active.features, recovered_set.features]),
                np.concatenate([active.index, recovered_set.index]),
            )
            is_recovered = np.concatenate([is_recovered, np.ones(len(recovered_set), dtype=bool)])
            order = np.argsort(active.index, kind="stable")
            active = active.take(order)
            is_recovered = is_recovered[order]

        records = self._associate(frame.frame_id, active, is_recovered)

        st.prev_inputs = inputs
        st.prev_fused = fused
        st.sources = select_sources(active, self.tcp_cfg)
        st.last_frame_id = frame.frame_id
        return FrameResult(frame.frame_id, records, active, is_recovered)

    def _associate(self, frame_id: int, active: DetectionSet, is_recovered: np.ndarray) -> list[TrackRecord]:
        st, cfg = self.state, self.cfg
        pairs: list[tuple[int, int]] = []
        if len(active) and st.tracks:
            sim = self._similarity(active.features, st.tracks)
            pairs = (match if cfg.matching == "greedy" else match_optimal)(sim, cfg.match_threshold)

        records = []
        matched_dets = set()
        matched_tracks = set()
        for i, k in pairs:
            t = st.tracks[k]
            t.memory.append(active.features[i].copy())
            t.last_box = BoundingBox.from_seq(active.boxes[i])
            t.class_id = int(active.class_ids[i])
            t.last_seen = frame_id
            t.score = float(active.scores[i])
            t.misses = 0
            matched_dets.add(i)
            matched_tracks.add(k)
            records.append(TrackRecord(t.track_id, active.boxes[i].tolist(), t.class_id, t.score,
                                       bool(is_recovered[i])))

        survivors = []
        for k, t in enumerate(st.tracks):
            if k not in matched_tracks:
                t.misses += 1
                if t.misses > cfg.max_misses:
                    continue
            survivors.append(t)

        for i in range(len(active)):
            if i in matched_dets or active.scores[i] <= self.tcp_cfg.tau_high:
                continue
            t = Track.start(st.next_id, active.features[i], BoundingBox.from_seq(active.boxes[i]),
                            active.class_ids[i], frame_id, active.scores[i], cfg.memory_len)
            st.next_id += 1
            survivors.append(t)
            records.append(TrackRecord(t.track_id, active.boxes[i].tolist(), t.class_id, t.score,
                                       bool(is_recovered[i])))
        st.tracks = survivors
        records.sort(key=lambda r: r.track_id)
        return records


def track_sequence(frames: Iterable[Frame], params: ModelParams, config) -> Iterator[FrameResult]:
    tracker = Tracker.from_config(params, config)
    for frame in frames:
        yield tracker.step(frame)

