"""Run orchestration shared by the CLI and the test harness."""

import os
import time

from .config import save_config
from .dmk import init_dmk, kalman_init, make_frame_view, track_frame
from .dpm import build_template_model, detect, load_model
from .errors import ValidationError
from .features import FeaturePyramid, KernelWindow
from .imaging import list_frames, load_frame
from .meanshift import run_meanshift
from .multitrack import TrackSet, export_tracks, step
from .synth import render_scene


def write_trajectory(path, rows):
    """rows: (frame, id, cx, cy, w, h)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("frame,id,cx,cy,w,h\n")
        for frame, tid, cx, cy, w, h in rows:
            fh.write(f"{frame},{tid},{cx:.2f},{cy:.2f},{w:.2f},{h:.2f}\n")


def write_truth(path, rows):
    """rows: (frame, id, cx, cy, w, h, visible)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("frame,id,cx,cy,w,h,visible\n")
        for frame, tid, cx, cy, w, h, visible in rows:
            fh.write(
                f"{frame},{tid},{cx:.2f},{cy:.2f},{w:.2f},{h:.2f},{visible:.4f}\n"
            )


DIAG_HEADER = (
    "frame,kernel,role,color_x,color_y,color_iters,tex_x,tex_y,tex_iters,"
    "hog_x,hog_y,score,total,reinit,reseeded,ds,ds_clamped\n"
)


def diag_rows(frame_index, state, diag):
    rows = []
    n = len(state.kernels)
    color_pos = diag.get("color_positions", [k.center for k in state.kernels])
    color_it = diag.get("color_iterations", [0] * n)
    tex_pos = diag.get("texture_positions", [k.center for k in state.kernels])
    tex_it = diag.get("texture_iterations", [0] * n)
    hog_pos = diag.get("hog_positions", [k.center for k in state.kernels])
    scores = diag.get("scores") or [float("nan")] * n
    total = diag.get("total_score", float("nan"))
    for i, kern in enumerate(state.kernels):
        rows.append(
            f"{frame_index},{i},{kern.role},"
            f"{color_pos[i][0]:.4f},{color_pos[i][1]:.4f},{color_it[i]},"
            f"{tex_pos[i][0]:.4f},{tex_pos[i][1]:.4f},{tex_it[i]},"
            f"{hog_pos[i][0]:.4f},{hog_pos[i][1]:.4f},"
            f"{scores[i]:.6f},{total:.6f},"
            f"{int(diag.get('reinit', False))},{int(diag.get('reseeded', False))},"
            f"{diag.get('ds', 0.0):.6f},{int(diag.get('ds_clamped', False))}\n"
        )
    return rows


def resolve_model(frames, box, config, model_path=None, template=False):
    """Load a model file or synthesize a template from the init frame."""
    if (model_path is None) == (not template):
        raise ValidationError("exactly one of model path or template must be given")
    if model_path is not None:
        return load_model(model_path)
    frame = load_frame(frames[0], 0)
    return build_template_model(
        frame, box,
        n_parts=config.dpm.template_parts,
        part_cells=config.dpm.template_part_cells,
        cell_size=config.features.cell_size,
        lam=config.features.levels_per_octave,
    )


def run_track(frames_dir, box, config, model=None, model_path=None,
              template=False, out_dir=None, max_frames=None):
    """Single-target run. Returns (trajectory rows, diagnostics rows, hooks).

    hooks maps frame index to the raw diagnostics dict for tests.
    """
    frames = list_frames(frames_dir)
    if max_frames is not None:
        frames = frames[:max_frames]
    if model is None:
        model = resolve_model(frames, box, config, model_path, template)
    rows = []
    diags = []
    hooks = {}
    state = None
    kalman = None
    for index, path in enumerate(frames):
        frame = load_frame(path, index)
        view = make_frame_view(frame, config)
        if state is None:
            state = init_dmk(view, box, model, config)
            kalman = kalman_init((box[0], box[1]), config.dmk.kalman_r)
        kalman, out_box, diag = track_frame(state, kalman, view, model, config)
        rows.append((index, 0, out_box[0], out_box[1], out_box[2], out_box[3]))
        diags.extend(diag_rows(index, state, diag))
        hooks[index] = diag
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_trajectory(os.path.join(out_dir, "trajectory.csv"), rows)
        with open(os.path.join(out_dir, "diagnostics.csv"), "w",
                  encoding="utf-8", newline="") as fh:
            fh.write(DIAG_HEADER)
            fh.writelines(diags)
        save_config(config, os.path.join(out_dir, "config.json"))
    return rows, diags, hooks


def run_baseline_ms(frames_dir, box, config, out_dir=None, max_frames=None):
    """Single color kernel mean-shift baseline, fixed box size."""
    from .features import color_bin_field, extract_histogram
    from .imaging import rgb_to_hsv

    frames = list_frames(frames_dir)
    if max_frames is not None:
        frames = frames[:max_frames]
    metric = config.metric()
    rows = []
    window = None
    target = None
    w, h = box[2], box[3]
    for index, path in enumerate(frames):
        frame = load_frame(path, index)
        field = color_bin_field(rgb_to_hsv(frame))
        if window is None:
            window = KernelWindow((box[0], box[1]), (w / 2.0, h / 2.0))
            target = extract_histogram(field, window)
        window, _ = run_meanshift(
            window, target, field, metric,
            config.meanshift.baseline_iterations, config.meanshift.move_eps,
        )
        rows.append((index, 0, window.center[0], window.center[1], w, h))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_trajectory(os.path.join(out_dir, "trajectory.csv"), rows)
        save_config(config, os.path.join(out_dir, "config.json"))
    return rows


def run_multitrack(frames_dir, model_path, config, out_dir=None,
                   max_frames=None, model=None):
    frames = list_frames(frames_dir)
    if max_frames is not None:
        frames = frames[:max_frames]
    if model is None:
        model = load_model(model_path)
    track_set = TrackSet()
    for index, path in enumerate(frames):
        frame = load_frame(path, index)
        view = make_frame_view(frame, config)
        step(track_set, view, model, config, index)
    rows = export_tracks(track_set)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_trajectory(os.path.join(out_dir, "trajectory.csv"), rows)
        save_config(config, os.path.join(out_dir, "config.json"))
    return rows, track_set


def run_timing(frames_dir, box, config, model=None, model_path=None,
               template=False, max_frames=None):
    """Mean per-frame wall time: DMK update vs full-frame detection."""
    frames = list_frames(frames_dir)
    if max_frames is not None:
        frames = frames[:max_frames]
    if model is None:
        model = resolve_model(frames, box, config, model_path, template)
    state = None
    kalman = None
    track_times = []
    detect_times = []
    for index, path in enumerate(frames):
        frame = load_frame(path, index)
        t0 = time.perf_counter()
        view = make_frame_view(frame, config)
        if state is None:
            state = init_dmk(view, box, model, config)
            kalman = kalman_init((box[0], box[1]), config.dmk.kalman_r)
        kalman, _, _ = track_frame(state, kalman, view, model, config)
        t1 = time.perf_counter()
        pyramid = FeaturePyramid(
            view.gray,
            lam=config.features.levels_per_octave,
            cell_size=config.features.cell_size,
            max_levels=config.features.max_levels,
        )
        detect(
            model, pyramid,
            stride=config.dpm.detect_stride,
            score_threshold=config.dpm.detect_threshold,
            part_radius=config.dpm.detect_part_radius,
            nms_iou=config.dpm.nms_iou,
        )
        t2 = time.perf_counter()
        track_times.append(t1 - t0)
        detect_times.append(t2 - t1)
    mean_track = sum(track_times) / len(track_times)
    mean_detect = sum(detect_times) / len(detect_times)
    return {
        "frames": len(track_times),
        "mean_track_s": mean_track,
        "mean_detect_s": mean_detect,
        "ratio": mean_detect / mean_track if mean_track > 0 else float("inf"),
    }


def run_synth(spec, out_dir):
    """Write a scene's frames and ground truth; returns the truth rows."""
    frames_dir = os.path.join(out_dir, "frames")
    os.makedirs(frames_dir, exist_ok=True)
    from .imaging import save_frame
    from .synth import save_scene

    truth_rows = []
    for t in range(spec.duration):
        frame, truth, _ = render_scene(spec, t)
        save_frame(os.path.join(frames_dir, f"frame_{t:05d}.png"), frame.rgb)
        for idx, cx, cy, w, h, visible in truth:
            truth_rows.append((t, idx, cx, cy, w, h, visible))
    write_truth(os.path.join(out_dir, "truth.csv"), truth_rows)
    save_scene(spec, os.path.join(out_dir, "scene.json"))
    return truth_rows
