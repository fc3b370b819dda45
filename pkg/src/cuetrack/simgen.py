"""Seeded synthetic detection streams with dense ground truth.

Objects move piecewise-linearly inside the image and bounce off its edges.
Appearance embeddings are an identity latent (partly shared within a
category) plus per-frame noise; semantic embeddings are a category latent
plus noise, noisier for "novel" categories. Events can be injected:

* flicker: the detection keeps its box and features but its score drops into
  the low-confidence band;
* occlusion: the object disappears for a few frames, or, for objects with
  children and ``partial_occlusion`` set, only the parent disappears while the
  contained child boxes stay visible;
* clutter: false-positive detections with fresh random features.

Every kind of randomness draws from its own stream, so enabling flicker
changes scores only and never boxes or features.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import BoundingBox, Detection, Frame

_STREAMS = ("layout", "motion", "embed", "score", "flicker", "occlusion", "clutter", "order")


def quantize(x: float) -> float:
    """Round to 9 significant digits, the precision of the stream formats."""
    return float(f"{float(x):.9g}")


def _quantize_array(a: np.ndarray) -> np.ndarray:
    return np.array([quantize(v) for v in np.ravel(a)], dtype=np.float64).reshape(np.shape(a))


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    image_size: tuple[int, int] = (640, 480)
    num_frames: int = 200
    num_objects: int = 10
    dim: int = 256
    num_categories: int = 4
    novel_fraction: float = 0.5
    speed_range: tuple[float, float] = (1.0, 5.0)
    turn_prob: float = 0.05
    size_range: tuple[float, float] = (40.0, 110.0)
    embed_scale: float = 5.0
    app_category_mix: float = 0.7
    sigma_app: float = 0.15
    sigma_sem: float = 0.1
    sigma_sem_novel: float = 0.1
    score_range: tuple[float, float] = (0.6, 1.0)
    tau_low: float = 0.05
    tau_high: float = 0.5
    flicker_prob: float = 0.02
    forced_flickers: tuple[tuple[int, int], ...] = ()
    occlusion_prob: float = 0.0
    occlusion_len: int = 3
    partial_occlusion: bool = True
    child_prob: float = 0.0
    children_per_parent: int = 2
    child_scale: float = 0.35
    clutter_rate: float = 0.0

    def __post_init__(self):
        probs = ("novel_fraction", "turn_prob", "flicker_prob", "occlusion_prob", "child_prob",
                 "app_category_mix")
        for name in probs:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("sigma_app", "sigma_sem", "sigma_sem_novel", "clutter_rate", "embed_scale"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.num_objects < 1 or self.num_frames < 1 or self.num_categories < 1:
            raise ValueError("num_objects, num_frames and num_categories must be >= 1")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if not 0.0 < self.child_scale < 1.0:
            raise ValueError("child_scale must lie in (0, 1)")
        lo, hi = self.size_range
        w, h = self.image_size
        if not 0 < lo <= hi < min(w, h):
            raise ValueError(f"size_range {self.size_range} does not fit the image {self.image_size}")
        if not 0.0 <= self.tau_low < self.tau_high <= 1.0:
            raise ValueError("need 0 <= tau_low < tau_high <= 1")
        object.__setattr__(self, "image_size", tuple(int(v) for v in self.image_size))
        for name in ("speed_range", "size_range", "score_range"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        object.__setattr__(self, "forced_flickers", tuple((int(i), int(t)) for i, t in self.forced_flickers))

    @property
    def novel_categories(self) -> tuple[int, ...]:
        n_novel = int(round(self.novel_fraction * self.num_categories))
        return tuple(range(self.num_categories - n_novel, self.num_categories))


@dataclass
class TruthRecord:
    identity: int
    box: BoundingBox
    class_id: int
    visible: bool
    det_index: int  # row in the frame's detection list, -1 when not visible


@dataclass
class ScenarioTruth:
    frames: list[list[TruthRecord]]
    frame_ids: list[int]
    events: list[dict] = field(default_factory=list)
    parents: dict[int, int] = field(default_factory=dict)  # child identity -> parent identity
    image_size: tuple[int, int] = (640, 480)

    def detection_identities(self, t: int, n_dets: int) -> np.ndarray:
        """Identity of each detection in frame ``t``; -1 for clutter."""
        ids = np.full(n_dets, -1, dtype=np.int64)
        for r in self.frames[t]:
            if r.visible and r.det_index >= 0:
                ids[r.det_index] = r.identity
        return ids

    def flicker_events(self) -> list[dict]:
        return [e for e in self.events if e["type"] == "flicker"]


@dataclass
class _Object:
    identity: int
    category: int
    cx: float
    cy: float
    w: float
    h: float
    vx: float = 0.0
    vy: float = 0.0
    parent: int | None = None
    rel: tuple[float, float] = (0.0, 0.0)  # child center offset, as a fraction of the parent size
    children: list[int] = field(default_factory=list)

    def box(self) -> tuple[float, float, float, float]:
        return (self.cx - self.w / 2, self.cy - self.h / 2, self.cx + self.w / 2, self.cy + self.h / 2)


def _unit(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def _random_velocity(rng, speed_range):
    speed = rng.uniform(*speed_range)
    theta = rng.uniform(0, 2 * math.pi)
    return speed * math.cos(theta), speed * math.sin(theta)


def _build_world(cfg: ScenarioConfig, rng: np.random.Generator) -> tuple[list[_Object], np.ndarray, np.ndarray]:
    W, H = cfg.image_size
    d = cfg.dim
    cat_latents = np.stack([_unit(rng, d) for _ in range(cfg.num_categories)])
    objects: list[_Object] = []
    for i in range(cfg.num_objects):
        w = rng.uniform(*cfg.size_range)
        h = rng.uniform(*cfg.size_range)
        cx = rng.uniform(w / 2, W - w / 2)
        cy = rng.uniform(h / 2, H - h / 2)
        vx, vy = _random_velocity(rng, cfg.speed_range)
        objects.append(_Object(i, int(rng.integers(cfg.num_categories)), cx, cy, w, h, vx, vy))
    next_id = cfg.num_objects
    for parent in list(objects):
        if rng.uniform() >= cfg.child_prob:
            continue
        for _ in range(cfg.children_per_parent):
            cw, ch = parent.w * cfg.child_scale, parent.h * cfg.child_scale
            # center offset keeps the child strictly inside the parent
            rx = rng.uniform(-(1 - cfg.child_scale) / 2, (1 - cfg.child_scale) / 2)
            ry = rng.uniform(-(1 - cfg.child_scale) / 2, (1 - cfg.child_scale) / 2)
            child = _Object(next_id, int(rng.integers(cfg.num_categories)), 0.0, 0.0, cw, ch,
                            parent=parent.identity, rel=(rx, ry))
            parent.children.append(next_id)
            objects.append(child)
            next_id += 1
    app_latents = []
    mix = cfg.app_category_mix
    for obj in objects:
        v = mix * cat_latents[obj.category] + math.sqrt(1 - mix * mix) * _unit(rng, d)
        app_latents.append(v / np.linalg.norm(v))
    return objects, np.stack(app_latents), cat_latents


def _place_children(objects: list[_Object]) -> None:
    for obj in objects:
        if obj.parent is not None:
            p = objects[obj.parent]
            obj.cx = p.cx + obj.rel[0] * p.w
            obj.cy = p.cy + obj.rel[1] * p.h


def _advance(obj: _Object, cfg: ScenarioConfig, rng: np.random.Generator) -> None:
    W, H = cfg.image_size
    turn = rng.uniform()
    new_v = _random_velocity(rng, cfg.speed_range)
    if turn < cfg.turn_prob:
        obj.vx, obj.vy = new_v
    obj.cx += obj.vx
    obj.cy += obj.vy
    half_w, half_h = obj.w / 2, obj.h / 2
    if obj.cx - half_w < 0 or obj.cx + half_w > W:
        obj.vx = -obj.vx
        obj.cx = min(max(obj.cx, half_w), W - half_w)
    if obj.cy - half_h < 0 or obj.cy + half_h > H:
        obj.vy = -obj.vy
        obj.cy = min(max(obj.cy, half_h), H - half_h)


def _quantized_box(obj: _Object, inside: BoundingBox | None) -> BoundingBox:
    x1, y1, x2, y2 = (quantize(v) for v in obj.box())
    if inside is not None:
        x1, y1 = max(x1, inside.x1), max(y1, inside.y1)
        x2, y2 = min(x2, inside.x2), min(y2, inside.y2)
    return BoundingBox(x1, y1, x2, y2)


def generate(cfg: ScenarioConfig) -> tuple[list[Frame], ScenarioTruth]:
    """Deterministic stream of frames and the matching ground truth."""
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(_STREAMS))
    rngs = {name: np.random.default_rng(s) for name, s in zip(_STREAMS, seeds)}
    objects, app_latents, cat_latents = _build_world(cfg, rngs["layout"])
    top_level = [o for o in objects if o.parent is None]
    d, scale = cfg.dim, cfg.embed_scale
    novel = set(cfg.novel_categories)
    forced = {}
    for ident, t in cfg.forced_flickers:
        forced.setdefault(t, set()).add(ident)

    occluded_until = {o.identity: -1 for o in top_level}
    occlusion_partial = {o.identity: False for o in top_level}
    frames: list[Frame] = []
    truth_frames: list[list[TruthRecord]] = []
    events: list[dict] = []

    for t in range(cfg.num_frames):
        if t > 0:
            for obj in top_level:
                _advance(obj, cfg, rngs["motion"])
        _place_children(objects)

        for obj in top_level:
            start = rngs["occlusion"].uniform() < cfg.occlusion_prob
            if start and occluded_until[obj.identity] < t and t > 0:
                end = min(t + cfg.occlusion_len - 1, cfg.num_frames - 1)
                occluded_until[obj.identity] = end
                partial = bool(obj.children) and cfg.partial_occlusion
                occlusion_partial[obj.identity] = partial
                events.append({"type": "occlusion", "identity": obj.identity, "frame_start": t,
                               "frame_end": end, "partial": partial})

        visible = {}
        for obj in objects:
            root = obj.identity if obj.parent is None else obj.parent
            hidden = occluded_until[root] >= t
            if hidden and obj.parent is not None and occlusion_partial[root]:
                hidden = False
            visible[obj.identity] = not hidden

        app_noise = rngs["embed"].standard_normal((len(objects), d)) / math.sqrt(d)
        sem_noise = rngs["embed"].standard_normal((len(objects), d)) / math.sqrt(d)
        base_scores = rngs["score"].uniform(*cfg.score_range, size=len(objects))
        flick_draw = rngs["flicker"].uniform(size=len(objects))
        flick_scores = rngs["flicker"].uniform(cfg.tau_low, cfg.tau_high, size=len(objects))

        boxes: dict[int, BoundingBox] = {}
        for obj in objects:
            inside = boxes[obj.parent] if obj.parent is not None else None
            boxes[obj.identity] = _quantized_box(obj, inside)

        entries = []
        for k, obj in enumerate(objects):
            if not visible[obj.identity]:
                continue
            flicker = flick_draw[k] < cfg.flicker_prob or obj.identity in forced.get(t, ())
            score = flick_scores[k] if flicker else base_scores[k]
            if flicker:
                events.append({"type": "flicker", "identity": obj.identity, "frame_start": t, "frame_end": t})
            app = scale * (app_latents[k] + cfg.sigma_app * app_noise[k])
            sigma_sem = cfg.sigma_sem_novel if obj.category in novel else cfg.sigma_sem
            sem = scale * (cat_latents[obj.category] + sigma_sem * sem_noise[k])
            entries.append((obj.identity, Detection(boxes[obj.identity], obj.category, quantize(score),
                                                    _quantize_array(app), _quantize_array(sem))))

        n_clutter = rngs["clutter"].poisson(cfg.clutter_rate) if cfg.clutter_rate > 0 else 0
        W, H = cfg.image_size
        for _ in range(n_clutter):
            crng = rngs["clutter"]
            w, h = crng.uniform(*cfg.size_range), crng.uniform(*cfg.size_range)
            x1, y1 = crng.uniform(0, W - w), crng.uniform(0, H - h)
            box = BoundingBox(quantize(x1), quantize(y1), quantize(x1 + w), quantize(y1 + h))
            cat = int(crng.integers(cfg.num_categories))
            app = scale * _unit(crng, d)
            sem = scale * (cat_latents[cat] + cfg.sigma_sem * crng.standard_normal(d) / math.sqrt(d))
            score = crng.uniform(cfg.tau_low, cfg.score_range[1])
            entries.append((-1, Detection(box, cat, quantize(score), _quantize_array(app), _quantize_array(sem))))

        order = rngs["order"].permutation(len(entries))
        entries = [entries[i] for i in order]
        det_index = {ident: i for i, (ident, _) in enumerate(entries) if ident >= 0}
        frames.append(Frame(t, cfg.image_size, [det for _, det in entries]))
        truth_frames.append([
            TruthRecord(o.identity, boxes[o.identity], o.category, visible[o.identity],
                        det_index.get(o.identity, -1))
            for o in objects
        ])

    parents = {o.identity: o.parent for o in objects if o.parent is not None}
    truth = ScenarioTruth(truth_frames, list(range(cfg.num_frames)), events, parents, cfg.image_size)
    return frames, truth


@dataclass
class TrainingPair:
    """Adjacent frames with ``Y[i, j] = 1`` when detection ``i`` of the later
    frame and detection ``j`` of the earlier frame share an identity."""

    prev: Frame
    curr: Frame
    y: np.ndarray


def association_labels(curr_ids: np.ndarray, prev_ids: np.ndarray) -> np.ndarray:
    curr_ids = np.asarray(curr_ids)
    prev_ids = np.asarray(prev_ids)
    y = (curr_ids[:, None] == prev_ids[None, :]) & (curr_ids[:, None] >= 0)
    return y.astype(np.float64)


def to_training_pairs(frames: list[Frame], truth: ScenarioTruth) -> list[TrainingPair]:
    pairs = []
    for t in range(1, len(frames)):
        prev, curr = frames[t - 1], frames[t]
        if not prev.detections or not curr.detections:
            continue
        y = association_labels(truth.detection_identities(t, len(curr)),
                               truth.detection_identities(t - 1, len(prev)))
        pairs.append(TrainingPair(prev, curr, y))
    return pairs
