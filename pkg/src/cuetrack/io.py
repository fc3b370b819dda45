"""Line-oriented file formats.

Detection stream (one JSON object per line)::

    {"frame_id": 0, "image_w": 640, "image_h": 480,
     "detections": [{"box": [x1, y1, x2, y2], "score": 0.9, "class_id": 2,
                     "app": [...], "sem": [...]}]}

Truth stream: same frame envelope; each record has ``box``, ``class_id``,
``identity``, ``visible``, ``det_index`` (row in the detection stream, -1 when
hidden) and ``parent`` (identity or null). Events are one JSON object per line.

Track stream::

    {"frame_id": 0, "tracks": [{"track_id": 0, "box": [...], "class_id": 2,
                                "score": 0.9, "recovered": false}]}

Stream floats are written with 9 significant digits. Checkpoints are a single
JSON document::

    {"format": "cuetrack-checkpoint", "version": 1, "config_fingerprint": "...",
     "dims": {"d": 256, "h": 256},
     "tensors": {"mcf.loc_w": {"shape": [256, 4], "data": [...]}, ...}}

with tensor data flattened in C order at full double precision.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import BoundingBox, Detection, Frame, GeometryError
from .model import ModelParams
from .simgen import ScenarioTruth, TruthRecord, quantize
from .tracker import TrackFrame, TrackRecord

CHECKPOINT_FORMAT = "cuetrack-checkpoint"
CHECKPOINT_VERSION = 1


class FormatError(ValueError):
    """Malformed input; carries the file, 1-based line number and field."""

    def __init__(self, path, line: int, field: str, message: str):
        super().__init__(f"{path}:{line}: field {field!r}: {message}")
        self.path = str(path)
        self.line = line
        self.field = field
        self.message = message


def _q(values: Iterable[float]) -> list[float]:
    return [quantize(v) for v in values]


def _dump(obj) -> str:
    return json.dumps(obj, separators=(", ", ": "), allow_nan=False)


def _write_lines(path, lines: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")


def _iter_json_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(path, lineno, "<line>", f"invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise FormatError(path, lineno, "<line>", "expected a JSON object")
            yield lineno, obj


class _Reader:
    def __init__(self, path, lineno):
        self.path, self.lineno = path, lineno

    def fail(self, field, message):
        raise FormatError(self.path, self.lineno, field, message)

    def get(self, obj, key, kind, where=""):
        name = f"{where}{key}"
        if key not in obj:
            self.fail(name, "missing")
        val = obj[key]
        if kind is int:
            if isinstance(val, bool) or not isinstance(val, int):
                self.fail(name, f"expected integer, got {type(val).__name__}")
        elif kind is float:
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                self.fail(name, f"expected number, got {type(val).__name__}")
            val = float(val)
        elif kind is bool:
            if not isinstance(val, bool):
                self.fail(name, f"expected boolean, got {type(val).__name__}")
        elif kind is list:
            if not isinstance(val, list):
                self.fail(name, f"expected array, got {type(val).__name__}")
        return val

    def vector(self, obj, key, where="", length=None):
        vals = self.get(obj, key, list, where)
        if length is not None and len(vals) != length:
            self.fail(f"{where}{key}", f"expected {length} values, got {len(vals)}")
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
            self.fail(f"{where}{key}", "expected an array of numbers")
        return np.array(vals, dtype=np.float64)

    def box(self, obj, where):
        vals = self.vector(obj, "box", where, length=4)
        try:
            return BoundingBox.from_seq(vals)
        except GeometryError as exc:
            self.fail(f"{where}box", str(exc))


# detection streams

def frame_to_json(frame: Frame) -> dict:
    w, h = frame.image_size
    return {
        "frame_id": int(frame.frame_id),
        "image_w": int(w),
        "image_h": int(h),
        "detections": [
            {"box": _q(d.box.as_list()), "score": quantize(d.score), "class_id": int(d.class_id),
             "app": _q(d.app), "sem": _q(d.sem)}
            for d in frame.detections
        ],
    }


def write_frames(path, frames: Sequence[Frame]) -> None:
    _write_lines(path, (_dump(frame_to_json(f)) for f in frames))


def read_frames(path) -> list[Frame]:
    frames = []
    last_id = None
    for lineno, obj in _iter_json_lines(path):
        r = _Reader(path, lineno)
        fid = r.get(obj, "frame_id", int)
        if last_id is not None and fid <= last_id:
            r.fail("frame_id", f"frame ids must increase ({fid} after {last_id})")
        last_id = fid
        w, h = r.get(obj, "image_w", int), r.get(obj, "image_h", int)
        if w <= 0 or h <= 0:
            r.fail("image_w", f"degenerate image size {w}x{h}")
        dets = []
        dim = None
        for k, raw in enumerate(r.get(obj, "detections", list)):
            where = f"detections[{k}]."
            if not isinstance(raw, dict):
                r.fail(f"detections[{k}]", "expected an object")
            box = r.box(raw, where)
            score = r.get(raw, "score", float, where)
            if not 0.0 <= score <= 1.0:
                r.fail(f"{where}score", f"{score} outside [0, 1]")
            app = r.vector(raw, "app", where)
            sem = r.vector(raw, "sem", where, length=len(app))
            if dim is not None and len(app) != dim:
                r.fail(f"{where}app", f"dimension {len(app)} differs from {dim}")
            dim = len(app)
            try:
                box = box.clipped(w, h)
            except GeometryError:
                r.fail(f"{where}box", "box lies outside the image")
            dets.append(Detection(box, r.get(raw, "class_id", int, where), score, app, sem))
        frames.append(Frame(fid, (w, h), dets))
    return frames


# ground truth

def write_truth(path, truth: ScenarioTruth, events_path=None) -> None:
    w, h = truth.image_size

    def line(fid, records):
        return _dump({
            "frame_id": int(fid), "image_w": int(w), "image_h": int(h),
            "detections": [
                {"box": _q(r.box.as_list()), "class_id": int(r.class_id), "identity": int(r.identity),
                 "visible": bool(r.visible), "det_index": int(r.det_index),
                 "parent": truth.parents.get(r.identity)}
                for r in records
            ],
        })

    _write_lines(path, (line(fid, recs) for fid, recs in zip(truth.frame_ids, truth.frames)))
    if events_path is not None:
        write_events(events_path, truth.events)


def write_events(path, events: Sequence[dict]) -> None:
    _write_lines(path, (_dump(e) for e in events))


def read_events(path) -> list[dict]:
    events = []
    for lineno, obj in _iter_json_lines(path):
        r = _Reader(path, lineno)
        r.get(obj, "identity", int)
        r.get(obj, "frame_start", int)
        r.get(obj, "frame_end", int)
        if obj.get("type") not in ("flicker", "occlusion"):
            r.fail("type", f"unknown event type {obj.get('type')!r}")
        events.append(obj)
    return events


def read_truth(path, events_path=None) -> ScenarioTruth:
    frames, ids, parents = [], [], {}
    size = None
    for lineno, obj in _iter_json_lines(path):
        r = _Reader(path, lineno)
        ids.append(r.get(obj, "frame_id", int))
        size = (r.get(obj, "image_w", int), r.get(obj, "image_h", int))
        records = []
        for k, raw in enumerate(r.get(obj, "detections", list)):
            where = f"detections[{k}]."
            if not isinstance(raw, dict):
                r.fail(f"detections[{k}]", "expected an object")
            ident = r.get(raw, "identity", int, where)
            records.append(TruthRecord(ident, r.box(raw, where), r.get(raw, "class_id", int, where),
                                       r.get(raw, "visible", bool, where), r.get(raw, "det_index", int, where)))
            parent = raw.get("parent")
            if parent is not None:
                if isinstance(parent, bool) or not isinstance(parent, int):
                    r.fail(f"{where}parent", "expected integer or null")
                parents[ident] = parent
        frames.append(records)
    events = read_events(events_path) if events_path is not None else []
    return ScenarioTruth(frames, ids, events, parents, size or (0, 0))


# track outputs

def write_tracks(path, results: Sequence[TrackFrame]) -> None:
    def line(res):
        return _dump({
            "frame_id": int(res.frame_id),
            "tracks": [
                {"track_id": int(t.track_id), "box": _q(t.box), "class_id": int(t.class_id),
                 "score": quantize(t.score), "recovered": bool(t.recovered)}
                for t in res.tracks
            ],
        })

    _write_lines(path, (line(r) for r in results))


def read_tracks(path) -> list[TrackFrame]:
    out = []
    for lineno, obj in _iter_json_lines(path):
        r = _Reader(path, lineno)
        recs = []
        for k, raw in enumerate(r.get(obj, "tracks", list)):
            where = f"tracks[{k}]."
            if not isinstance(raw, dict):
                r.fail(f"tracks[{k}]", "expected an object")
            box = r.box(raw, where)
            recs.append(TrackRecord(r.get(raw, "track_id", int, where), box.as_list(),
                                    r.get(raw, "class_id", int, where), r.get(raw, "score", float, where),
                                    r.get(raw, "recovered", bool, where)))
        out.append(TrackFrame(r.get(obj, "frame_id", int), recs))
    return out


# checkpoints and loss curves

def save_checkpoint(path, params: ModelParams, config_fingerprint: str = "") -> None:
    tensors = {k: {"shape": list(np.shape(v)), "data": [float(x) for x in np.ravel(v)]}
               for k, v in params.named_tensors().items()}
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config_fingerprint": config_fingerprint,
        "dims": {"d": params.dim, "h": params.mcf.hidden},
        "tensors": tensors,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def _tensor_specs(r: _Reader, doc) -> dict:
    tensors = doc.get("tensors") if isinstance(doc, dict) else None
    if not isinstance(tensors, dict):
        r.fail("tensors", "expected an object")
    for name, entry in tensors.items():
        if not isinstance(entry, dict) or not isinstance(entry.get("shape"), list) \
                or not isinstance(entry.get("data"), list):
            r.fail(f"tensors.{name}", "expected {shape, data}")
    return tensors


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(path, exc.lineno, "<document>", f"invalid JSON: {exc.msg}") from None
    r = _Reader(path, 1)
    if not isinstance(doc, dict):
        r.fail("<document>", "expected a JSON object")
    if doc.get("format") != CHECKPOINT_FORMAT:
        r.fail("format", f"expected {CHECKPOINT_FORMAT!r}")
    if doc.get("version") != CHECKPOINT_VERSION:
        r.fail("version", f"unsupported version {doc.get('version')!r}")
    tensors = {}
    for name, entry in _tensor_specs(r, doc).items():
        shape = tuple(entry["shape"])
        data = np.array(entry["data"], dtype=np.float64)
        if data.size != int(np.prod(shape)):
            r.fail(f"tensors.{name}", f"{data.size} values do not fill shape {shape}")
        tensors[name] = data.reshape(shape)
    try:
        params = ModelParams.from_named(tensors)
    except (TypeError, ValueError) as exc:
        r.fail("tensors", str(exc))
    meta = {k: doc[k] for k in ("format", "version", "config_fingerprint", "dims")}
    return params, meta


def write_loss_curve(path, curve: Sequence[float]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "mean_loss"])
        for i, v in enumerate(curve):
            writer.writerow([i, repr(float(v))])
