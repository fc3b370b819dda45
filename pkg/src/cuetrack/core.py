"""Domain types and exact box geometry shared by every stage of the engine."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels


class GeometryError(ValueError):
    """Raised for degenerate boxes or image sizes."""


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box with half-open extents ``[x1, x2) x [y1, y2)``."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        vals = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(v) for v in vals):
            raise GeometryError(f"non-finite box coordinates {vals}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise GeometryError(f"degenerate box {vals}")

    @classmethod
    def from_seq(cls, xyxy: Sequence[float]) -> "BoundingBox":
        x1, y1, x2, y2 = (float(v) for v in xyxy)
        return cls(x1, y1, x2, y2)

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.y1, self.x2, self.y2], dtype=np.float64)

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    def scaled(self, k: float) -> "BoundingBox":
        return BoundingBox(self.x1 * k, self.y1 * k, self.x2 * k, self.y2 * k)

    def clipped(self, width: float, height: float) -> "BoundingBox":
        """Clip to the image; raises if nothing of the box remains inside."""
        return BoundingBox(
            min(max(self.x1, 0.0), width),
            min(max(self.y1, 0.0), height),
            min(max(self.x2, 0.0), width),
            min(max(self.y2, 0.0), height),
        )


@dataclass(frozen=True)
class FeatureBundle:
    """The three per-detection cue embeddings, all of one dimension ``d``."""

    app: np.ndarray
    loc: np.ndarray
    sem: np.ndarray

    def __post_init__(self):
        shapes = {np.shape(self.app), np.shape(self.loc), np.shape(self.sem)}
        if len(shapes) != 1:
            raise ValueError(f"cue dimensions differ: {sorted(shapes)}")
        (shape,) = shapes
        if len(shape) != 1 or shape[0] < 2:
            raise ValueError(f"cue vectors must be 1-d with d >= 2, got shape {shape}")
        for name in ("app", "loc", "sem"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite values in {name} embedding")

    @property
    def dim(self) -> int:
        return int(np.shape(self.app)[0])


@dataclass
class Detection:
    """One detector output: box, predicted class, score and cue inputs.

    ``app`` and ``sem`` arrive from the detector. ``raw_loc`` is the
    normalized box fed to the learnable location projection; it is filled in
    by :class:`Frame` when left as ``None``.
    """

    box: BoundingBox
    class_id: int
    score: float
    app: np.ndarray
    sem: np.ndarray
    raw_loc: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        self.app = np.asarray(self.app, dtype=np.float64)
        self.sem = np.asarray(self.sem, dtype=np.float64)
        if self.app.shape != self.sem.shape or self.app.ndim != 1:
            raise ValueError("app and sem embeddings must be 1-d vectors of equal length")
        if self.raw_loc is not None:
            self.raw_loc = np.asarray(self.raw_loc, dtype=np.float64)
            if self.raw_loc.shape != (4,) or np.any(self.raw_loc < 0) or np.any(self.raw_loc > 1):
                raise ValueError("raw_loc must be a 4-vector in [0, 1]")


@dataclass
class Frame:
    """A timestamped set of detections; boxes are clipped to the image on ingest."""

    frame_id: int
    image_size: tuple[int, int]
    detections: list[Detection] = field(default_factory=list)

    def __post_init__(self):
        w, h = self.image_size
        if w <= 0 or h <= 0:
            raise GeometryError(f"degenerate image size {self.image_size}")
        self.image_size = (int(w), int(h))
        for det in self.detections:
            b = det.box
            if b.x1 < 0 or b.y1 < 0 or b.x2 > w or b.y2 > h:
                det.box = b.clipped(w, h)
            if det.raw_loc is None:
                det.raw_loc = normalize_box(det.box, self.image_size)

    def __len__(self) -> int:
        return len(self.detections)

    def boxes(self) -> np.ndarray:
        return np.array([d.box.as_list() for d in self.detections], dtype=np.float64).reshape(-1, 4)

    def scores(self) -> np.ndarray:
        return np.array([d.score for d in self.detections], dtype=np.float64)

    def class_ids(self) -> np.ndarray:
        return np.array([d.class_id for d in self.detections], dtype=np.int64)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    return float(kernels.iou_matrix(a.as_array(), b.as_array())[0, 0])


def ioc(parent: BoundingBox, child: BoundingBox) -> float:
    """Fraction of the child's area that lies inside the parent."""
    return float(kernels.ioc_matrix(parent.as_array(), child.as_array())[0, 0])


def normalize_box(box: BoundingBox, image_size: tuple[float, float]) -> np.ndarray:
    """Center/size form ``(cx/W, cy/H, w/W, h/H)``."""
    width, height = image_size
    if width <= 0 or height <= 0:
        raise GeometryError(f"degenerate image size {image_size}")
    cx, cy = box.center
    return np.array(
        [cx / width, cy / height, (box.x2 - box.x1) / width, (box.y2 - box.y1) / height],
        dtype=np.float64,
    )


def class_agnostic_nms(detections: Sequence[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy score-ordered suppression that ignores class labels.

    Returned detections keep their scores and follow the visiting order
    (score descending, ties broken by box coordinates).
    """
    if not detections:
        return []
    boxes = np.array([d.box.as_list() for d in detections])
    scores = np.array([d.score for d in detections])
    keep = kernels.nms(boxes, scores, iou_threshold)
    return [detections[i] for i in keep]
