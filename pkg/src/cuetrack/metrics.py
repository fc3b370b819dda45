"""Desk-scale tracking metrics and annotation-continuity statistics.

The report fields are simple analogues of localization, association and
classification accuracy, not the benchmark formulas:

* ground truth and output boxes are matched per frame by greedy IoU >= 0.5;
* each output track id is mapped to the ground-truth identity it covers most
  often over the whole sequence (ties go to the smaller identity);
* an identity switch is a change of matched track id between consecutive
  matched appearances of one identity.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .simgen import ScenarioTruth

MATCH_IOU = 0.5
# greedy_assign keeps entries strictly above its threshold
_MATCH_FLOOR = float(np.nextafter(MATCH_IOU, -np.inf))


@dataclass
class EvalReport:
    loc_recall: float
    loc_precision: float
    assoc_accuracy: float
    id_switches: int
    cls_accuracy: float
    detection_recovery_rate: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass
class ContinuityStats:
    mean_iou: float
    mean_area_ratio: float
    mean_displacement: float
    annotations_per_track: float
    frames_per_track: float

    def to_dict(self) -> dict:
        return asdict(self)


def _ratio(num: float, den: float, empty: float) -> float:
    return num / den if den > 0 else empty


def match_frame(gt_boxes: np.ndarray, out_boxes: np.ndarray) -> list[tuple[int, int]]:
    """Greedy one-to-one matching of ground-truth rows to output rows at IoU >= 0.5."""
    if len(gt_boxes) == 0 or len(out_boxes) == 0:
        return []
    ious = kernels.iou_matrix(gt_boxes, out_boxes)
    return [(int(g), int(o)) for g, o in kernels.greedy_assign(ious, _MATCH_FLOOR)]


def evaluate(outputs: Sequence, truth: ScenarioTruth) -> EvalReport:
    """Score per-frame track outputs (objects with ``frame_id`` and ``tracks``)."""
    out_ids = [int(f.frame_id) for f in outputs]
    if out_ids != list(truth.frame_ids):
        raise ValueError(
            f"frame range mismatch: output has {len(out_ids)} frames "
            f"({out_ids[:1]}..{out_ids[-1:]}), truth has {len(truth.frame_ids)}"
        )
    n_gt = n_out = 0
    matches: list[tuple[int, int, int, int]] = []  # frame, identity, track, class ok
    matched_by_frame: list[set[int]] = []
    for t, (frame_out, records) in enumerate(zip(outputs, truth.frames)):
        gts = [r for r in records if r.visible]
        tracks = sorted(frame_out.tracks, key=lambda r: (tuple(r.box), r.class_id))
        n_gt += len(gts)
        n_out += len(tracks)
        gt_boxes = np.array([r.box.as_list() for r in gts]).reshape(-1, 4)
        out_boxes = np.array([list(r.box) for r in tracks], dtype=np.float64).reshape(-1, 4)
        seen = set()
        for g, o in match_frame(gt_boxes, out_boxes):
            gt, tr = gts[g], tracks[o]
            matches.append((t, gt.identity, int(tr.track_id), int(gt.class_id == tr.class_id)))
            seen.add(gt.identity)
        matched_by_frame.append(seen)

    votes: dict[int, dict[int, int]] = {}
    for _, ident, tid, _ in matches:
        votes.setdefault(tid, {}).setdefault(ident, 0)
        votes[tid][ident] += 1
    mapping = {tid: min(v.items(), key=lambda kv: (-kv[1], kv[0]))[0] for tid, v in votes.items()}
    consistent = sum(1 for _, ident, tid, _ in matches if mapping[tid] == ident)

    switches = 0
    last_track: dict[int, int] = {}
    for _, ident, tid, _ in matches:  # already in frame order
        if ident in last_track and last_track[ident] != tid:
            switches += 1
        last_track[ident] = tid

    flickers = truth.flicker_events()
    recovered = sum(1 for e in flickers if e["identity"] in matched_by_frame[e["frame_start"]])

    n_match = len(matches)
    return EvalReport(
        loc_recall=_ratio(n_match, n_gt, 1.0),
        loc_precision=_ratio(n_match, n_out, 1.0 if n_gt == 0 else 0.0),
        assoc_accuracy=_ratio(consistent, n_match, 0.0),
        id_switches=switches,
        cls_accuracy=_ratio(sum(m[3] for m in matches), n_match, 0.0),
        detection_recovery_rate=_ratio(recovered, len(flickers), 1.0),
    )


def annotation_tracks(truth: ScenarioTruth) -> dict[int, list[tuple[int, np.ndarray]]]:
    """Visible annotations grouped by identity, in frame order."""
    tracks: dict[int, list[tuple[int, np.ndarray]]] = {}
    for fid, records in zip(truth.frame_ids, truth.frames):
        for r in records:
            if r.visible:
                tracks.setdefault(r.identity, []).append((fid, r.box.as_array()))
    return tracks


def subsample(truth: ScenarioTruth, every: int) -> ScenarioTruth:
    """Keep every ``every``-th frame, the way sparse annotation would."""
    keep = list(range(0, len(truth.frames), every))
    return ScenarioTruth([truth.frames[i] for i in keep], [truth.frame_ids[i] for i in keep],
                         [], dict(truth.parents), truth.image_size)


def continuity_stats(source: ScenarioTruth | dict[int, Iterable[tuple[int, np.ndarray]]]) -> ContinuityStats:
    """Consecutive-annotation statistics averaged over all annotated pairs.

    ``source`` is a truth object or a mapping ``identity -> [(frame, box), ...]``.
    Tracks with a single annotation count toward the per-track means only.
    """
    tracks = annotation_tracks(source) if isinstance(source, ScenarioTruth) else {
        k: sorted(((int(f), np.asarray(b, dtype=np.float64)) for f, b in v), key=lambda x: x[0])
        for k, v in source.items()
    }
    ious, ratios, disps = [], [], []
    counts, spans = [], []
    for anns in tracks.values():
        if not anns:
            continue
        counts.append(len(anns))
        spans.append(anns[-1][0] - anns[0][0] + 1)
        if len(anns) < 2:
            continue
        boxes = np.stack([b for _, b in anns])
        a, b = boxes[:-1], boxes[1:]
        ious.extend(np.diag(kernels.iou_matrix(a, b)) if len(a) else [])
        area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
        area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
        ratios.extend(np.maximum(area_a, area_b) / np.minimum(area_a, area_b))
        ca = np.stack([(a[:, 0] + a[:, 2]) / 2, (a[:, 1] + a[:, 3]) / 2], axis=1)
        cb = np.stack([(b[:, 0] + b[:, 2]) / 2, (b[:, 1] + b[:, 3]) / 2], axis=1)
        disps.extend(np.hypot(*(cb - ca).T))

    def mean(xs):
        return float(np.mean(xs)) if len(xs) else 0.0

    return ContinuityStats(mean(ious), mean(ratios), mean(disps), mean(counts), mean(spans))


def format_table(rows: dict[str, EvalReport] | EvalReport) -> str:
    """Aligned-column text table; one row per named report."""
    if isinstance(rows, EvalReport):
        rows = {"result": rows}
    cols = list(EvalReport.__dataclass_fields__)
    header = ["config"] + cols
    body = []
    for name, rep in rows.items():
        vals = rep.to_dict()
        body.append([name] + [str(vals[c]) if isinstance(vals[c], int) else f"{vals[c]:.4f}" for c in cols])
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(v.rjust(w) if i else v.ljust(w) for i, (v, w) in enumerate(zip(r, widths))) for r in body]
    return "\n".join(lines)
