"""Multi-target lifecycle: detection-seeded births, independent updates,
duplicate gating, and termination after repeated misses.

Track updates within a frame are independent; births and terminations run
as a serial phase afterwards, so per-frame results do not depend on the
order tracks are stored in.
"""

from dataclasses import dataclass, field

from .dmk import init_dmk, kalman_init, track_frame
from .dpm import detect, iou
from .errors import ValidationError, ZeroSupportError

ACTIVE = "active"
LOST = "lost"
TERMINATED = "terminated"


@dataclass
class Track:
    id: int
    dmk: object
    kalman: object
    status: str = ACTIVE
    trajectory: list = field(default_factory=list)  # (frame, cx, cy, w, h, score)
    miss_count: int = 0


@dataclass
class TrackSet:
    tracks: list = field(default_factory=list)
    next_id: int = 0

    def alive(self):
        return [t for t in self.tracks if t.status != TERMINATED]


def _coast(track):
    """Shift a lost track's kernels along the Kalman-predicted velocity."""
    vx, vy = track.kalman.state[2], track.kalman.state[3]
    state = track.dmk
    state.reference_center = (
        state.reference_center[0] + vx, state.reference_center[1] + vy
    )
    for kern in state.kernels:
        kern.center = (kern.center[0] + vx, kern.center[1] + vy)


def step(track_set, view, model, config, frame_index):
    """Advance every live track one frame, then run the birth/death phase."""
    diagnostics = {}
    for track in track_set.tracks:
        if track.status == TERMINATED:
            continue
        if track.status == LOST:
            _coast(track)
        track.kalman, box, diag = track_frame(
            track.dmk, track.kalman, view, model, config
        )
        diagnostics[track.id] = diag
        score = diag.get("total_score", float("nan"))
        track.trajectory.append(
            (frame_index, box[0], box[1], box[2], box[3], score)
        )
        fallback = diag["reinit"] and not diag["reseeded"]
        if fallback:
            track.status = LOST
            track.miss_count += 1
            if track.miss_count >= config.multitrack.miss_limit:
                track.status = TERMINATED
        else:
            track.status = ACTIVE
            track.miss_count = 0

    if frame_index % config.multitrack.detect_interval == 0:
        detections = detect(
            model, view.pyramid,
            stride=config.dpm.detect_stride,
            score_threshold=config.multitrack.birth_threshold,
            part_radius=config.dpm.detect_part_radius,
            nms_iou=config.dpm.nms_iou,
        )
        occupied = [t.dmk.box for t in track_set.alive()]
        for det in detections:
            if any(iou(det.box, box) > config.multitrack.birth_iou for box in occupied):
                continue
            try:
                state = init_dmk(view, det.box, model, config)
            except (ValidationError, ZeroSupportError):
                continue
            track = Track(
                id=track_set.next_id,
                dmk=state,
                kalman=kalman_init(det.box[:2], config.dmk.kalman_r),
            )
            track.trajectory.append(
                (frame_index, det.box[0], det.box[1], det.box[2], det.box[3],
                 float("nan"))
            )
            track_set.tracks.append(track)
            track_set.next_id += 1
            occupied.append(det.box)
    return diagnostics


def export_tracks(track_set):
    """Trajectory rows (frame, id, cx, cy, w, h) sorted by (frame, id)."""
    rows = []
    for track in track_set.tracks:
        for frame, cx, cy, w, h, _score in track.trajectory:
            rows.append((frame, track.id, cx, cy, w, h))
    rows.sort(key=lambda r: (r[0], r[1]))
    return rows
