"""Trajectory evaluation: center error against ground truth.

Prediction ids are matched to truth ids greedily by accumulated box
overlap across shared frames; single-target files match directly.
"""

import csv
import math
from dataclasses import dataclass

from .dpm import iou
from .errors import ValidationError


def read_trajectory(path):
    """CSV rows -> {id: {frame: (cx, cy, w, h)}}. Extra columns are ignored."""
    tracks = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValidationError(f"trajectory {path!r} is empty")
        for row in reader:
            if len(row) < 6:
                raise ValidationError(f"trajectory {path!r}: short row {row!r}")
            frame = int(row[0])
            tid = int(row[1])
            box = tuple(float(v) for v in row[2:6])
            tracks.setdefault(tid, {})[frame] = box
    return tracks


@dataclass
class EvalReport:
    rows: list  # (frame, pred_id, truth_id, error_px)
    per_track: list  # (pred_id, truth_id, frames, mean_error_px)
    overall: float


def match_ids(pred, truth):
    """Greedy assignment maximizing summed IoU over shared frames."""
    scores = []
    for pid, ptraj in pred.items():
        for tid, ttraj in truth.items():
            shared = set(ptraj) & set(ttraj)
            if not shared:
                continue
            total = sum(iou(ptraj[f], ttraj[f]) for f in shared)
            scores.append((total, pid, tid))
    scores.sort(key=lambda s: (-s[0], s[1], s[2]))
    used_p = set()
    used_t = set()
    mapping = {}
    for _total, pid, tid in scores:
        if pid in used_p or tid in used_t:
            continue
        mapping[pid] = tid
        used_p.add(pid)
        used_t.add(tid)
    return mapping


def evaluate(pred, truth):
    mapping = match_ids(pred, truth)
    if not mapping:
        raise ValidationError("prediction and truth share no frames")
    rows = []
    per_track = []
    for pid in sorted(mapping):
        tid = mapping[pid]
        shared = sorted(set(pred[pid]) & set(truth[tid]))
        errors = []
        for frame in shared:
            px, py = pred[pid][frame][:2]
            tx, ty = truth[tid][frame][:2]
            err = math.hypot(px - tx, py - ty)
            rows.append((frame, pid, tid, err))
            errors.append(err)
        per_track.append((pid, tid, len(errors), sum(errors) / len(errors)))
    rows.sort(key=lambda r: (r[0], r[1]))
    overall = sum(r[3] for r in rows) / len(rows)
    return EvalReport(rows=rows, per_track=per_track, overall=overall)


def write_report(report, errors_path, summary_path):
    with open(errors_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("frame,id,truth_id,error_px\n")
        for frame, pid, tid, err in report.rows:
            fh.write(f"{frame},{pid},{tid},{err:.4f}\n")
    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("id,truth_id,frames,mean_error_px\n")
        for pid, tid, count, mean in report.per_track:
            fh.write(f"{pid},{tid},{count},{mean:.4f}\n")
        total_frames = sum(p[2] for p in report.per_track)
        fh.write(f"overall,,{total_frames},{report.overall:.4f}\n")
