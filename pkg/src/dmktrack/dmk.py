"""Deformable multiple-kernel tracking.

Per frame the kernels run a coarse-to-fine pipeline: color mean-shift,
texture mean-shift, then a deformable HOG stage that scores a local grid
of cell offsets per kernel and moves each kernel to the score-weighted
centroid, with parts paying quadratic deformation costs against anchors
tied to the root. Root and part centers are fused by score-weighted
aggregation, the box scale follows the bandwidth density derivative, and
a constant-velocity Kalman filter smooths the reported center.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .dpm import (
    deformation_features,
    detect,
    iou,
    l2_normalize,
    resolution_ratio,
    select_component,
)
from .errors import DmkError, ValidationError, ZeroSupportError
from .features import (
    FeaturePyramid,
    KernelWindow,
    color_bin_field,
    extract_histogram,
    hog_window,
    lbp_bin_field,
    level_for_object,
    part_level,
)
from .imaging import rgb_to_hsv, to_gray
from .meanshift import bandwidth_log_derivative, run_meanshift


@dataclass
class FrameView:
    """Per-frame features shared read-only by every track."""

    frame: object
    gray: np.ndarray
    color_field: object
    texture_field: object
    pyramid: FeaturePyramid


def make_frame_view(frame, config):
    gray = to_gray(frame)
    return FrameView(
        frame=frame,
        gray=gray,
        color_field=color_bin_field(rgb_to_hsv(frame)),
        texture_field=lbp_bin_field(gray),
        pyramid=FeaturePyramid(
            gray,
            lam=config.features.levels_per_octave,
            cell_size=config.features.cell_size,
            max_levels=config.features.max_levels,
        ),
    )


@dataclass
class Kernel:
    center: tuple  # (x, y) image pixels
    size: tuple  # (w, h) pixels
    level: int
    role: str  # "root" or "part:<i>"

    @property
    def window(self):
        return KernelWindow(self.center, (self.size[0] / 2.0, self.size[1] / 2.0))


@dataclass
class DmkState:
    component: int
    kernels: list  # root first, then parts
    target_color: list
    target_texture: list
    anchors: list  # per part, part-grid cells
    box_size: tuple
    reference_center: tuple
    last_scores: np.ndarray = None
    score_history: list = field(default_factory=list)
    level_clamped: bool = False

    @property
    def root(self):
        return self.kernels[0]

    @property
    def box(self):
        return (self.reference_center[0], self.reference_center[1],
                self.box_size[0], self.box_size[1])


def _kernel_tl_cells(kernel, rows, cols, scale, cell_size):
    """Float top-left cell coordinates of the kernel's filter window."""
    return (
        kernel.center[0] * scale / cell_size - cols / 2.0,
        kernel.center[1] * scale / cell_size - rows / 2.0,
    )


def _center_from_tl(tl, rows, cols, scale, cell_size):
    return (
        (tl[0] + cols / 2.0) * cell_size / scale,
        (tl[1] + rows / 2.0) * cell_size / scale,
    )


def init_dmk(view, box, model, config):
    """Build tracking state for one target from its bounding box."""
    cx, cy, w, h = box
    frame = view.frame
    if w <= 0 or h <= 0:
        raise ValidationError("init box must have positive size")
    if (cx - w / 2 < -0.5 or cy - h / 2 < -0.5
            or cx + w / 2 > frame.width - 0.5 or cy + h / 2 > frame.height - 0.5):
        raise ValidationError(
            f"init box {box} lies outside the {frame.width}x{frame.height} frame"
        )
    ci = select_component(model, w, h)
    comp = model.components[ci]
    k = model.cell_size
    lam = model.lam
    l0, clamped = level_for_object(
        w, h, comp.cols, comp.rows, k, lam, view.pyramid.max_level
    )
    lp = part_level(l0, lam)
    rho = resolution_ratio(l0, lp, lam)
    s0 = 2.0 ** (-l0 / lam)
    sp = 2.0 ** (-lp / lam)

    kernels_ = [Kernel(center=(cx, cy), size=(w, h), level=l0, role="root")]
    kappa = 1.0 if config.dmk.part_scale_mode == "literal" else 0.5
    root_tl = (cx * s0 / k - comp.cols / 2.0, cy * s0 / k - comp.rows / 2.0)
    anchors = []
    for i, part in enumerate(comp.parts):
        anchors.append(part.anchor)
        tl = (rho * root_tl[0] + part.anchor[0], rho * root_tl[1] + part.anchor[1])
        center = _center_from_tl(tl, part.rows, part.cols, sp, k)
        size = (w * part.cols / comp.cols * kappa, h * part.rows / comp.rows * kappa)
        kernels_.append(Kernel(center=center, size=size, level=lp, role=f"part:{i}"))

    target_color = []
    target_texture = []
    for kern in kernels_:
        target_color.append(extract_histogram(view.color_field, kern.window))
        target_texture.append(extract_histogram(view.texture_field, kern.window))

    return DmkState(
        component=ci,
        kernels=kernels_,
        target_color=target_color,
        target_texture=target_texture,
        anchors=anchors,
        box_size=(w, h),
        reference_center=(cx, cy),
        level_clamped=clamped,
    )


def _meanshift_stage(state, field_, targets, t_max, metric, move_eps):
    positions = []
    iterations = []
    for kern, target in zip(state.kernels, targets):
        window, used = run_meanshift(
            kern.window, target, field_, metric, t_max, move_eps
        )
        kern.center = window.center
        positions.append(window.center)
        iterations.append(used)
    return positions, iterations


def color_stage(state, view, config):
    return _meanshift_stage(
        state, view.color_field, state.target_color,
        config.dmk.t_color, config.metric(), config.meanshift.move_eps,
    )


def texture_stage(state, view, config):
    return _meanshift_stage(
        state, view.texture_field, state.target_texture,
        config.dmk.t_texture, config.metric(), config.meanshift.move_eps,
    )


def _grid_scores(hogmap, fnorm, rows, cols, base_x, base_y, radius,
                 anchor=None, dnorm=None):
    """Similarity of every candidate cell offset around (base_x, base_y)."""
    n = 2 * radius + 1
    scores = np.empty((n, n), dtype=np.float64)
    for iy, dy in enumerate(range(-radius, radius + 1)):
        for ix, dx in enumerate(range(-radius, radius + 1)):
            phi = hog_window(hogmap, base_x + dx, base_y + dy, rows, cols)
            s = float(np.dot(fnorm, l2_normalize(phi)))
            if anchor is not None:
                ox = base_x + dx - anchor[0]
                oy = base_y + dy - anchor[1]
                s -= float(np.dot(dnorm, l2_normalize(deformation_features(ox, oy))))
            scores[iy, ix] = s
    return scores


def _centroid_offset(scores, radius):
    """Score-weighted centroid offset in cells, None when the grid is flat."""
    smin = scores.min()
    if scores.max() - smin <= 1e-12:
        return None
    w = scores - smin
    total = w.sum()
    offs = np.arange(-radius, radius + 1, dtype=np.float64)
    ox = float((w.sum(axis=0) * offs).sum() / total)
    oy = float((w.sum(axis=1) * offs).sum() / total)
    return ox, oy


def hog_stage(state, view, model, config):
    """Deformable HOG refinement; updates kernel positions and scores."""
    comp = model.components[state.component]
    pyr = view.pyramid
    k = model.cell_size
    lam = model.lam
    root = state.root
    l0 = min(root.level, pyr.max_level)
    lp = part_level(l0, lam)
    rho = resolution_ratio(l0, lp, lam)
    s0 = pyr.scale(l0)
    sp = pyr.scale(lp)
    hm_root = pyr.level(l0)
    hm_part = pyr.level(lp) if comp.parts else None
    radius = config.dmk.hog_search_radius

    froot = l2_normalize(comp.root.reshape(-1))
    fparts = [l2_normalize(p.weights.reshape(-1)) for p in comp.parts]
    dparts = [l2_normalize(p.deform) for p in comp.parts]

    for _ in range(config.dmk.t_hog):
        tl = _kernel_tl_cells(root, comp.rows, comp.cols, s0, k)
        bx, by = int(round(tl[0])), int(round(tl[1]))
        scores = _grid_scores(hm_root, froot, comp.rows, comp.cols, bx, by, radius)
        off = _centroid_offset(scores, radius)
        if off is not None:
            root.center = _center_from_tl(
                (bx + off[0], by + off[1]), comp.rows, comp.cols, s0, k
            )
        root_tl = _kernel_tl_cells(root, comp.rows, comp.cols, s0, k)
        for i, part in enumerate(comp.parts):
            kern = state.kernels[i + 1]
            anchor_abs = (
                rho * root_tl[0] + state.anchors[i][0],
                rho * root_tl[1] + state.anchors[i][1],
            )
            tl = _kernel_tl_cells(kern, part.rows, part.cols, sp, k)
            bx, by = int(round(tl[0])), int(round(tl[1]))
            scores = _grid_scores(
                hm_part, fparts[i], part.rows, part.cols, bx, by, radius,
                anchor=anchor_abs, dnorm=dparts[i],
            )
            off = _centroid_offset(scores, radius)
            if off is not None:
                kern.center = _center_from_tl(
                    (bx + off[0], by + off[1]), part.rows, part.cols, sp, k
                )

    # final similarity per kernel at its settled position
    last = np.empty(len(state.kernels), dtype=np.float64)
    root_tl = _kernel_tl_cells(root, comp.rows, comp.cols, s0, k)
    phi = hog_window(
        hm_root, int(round(root_tl[0])), int(round(root_tl[1])),
        comp.rows, comp.cols,
    )
    last[0] = float(np.dot(froot, l2_normalize(phi)))
    for i, part in enumerate(comp.parts):
        kern = state.kernels[i + 1]
        anchor_abs = (
            rho * root_tl[0] + state.anchors[i][0],
            rho * root_tl[1] + state.anchors[i][1],
        )
        tl = _kernel_tl_cells(kern, part.rows, part.cols, sp, k)
        phi = hog_window(
            hm_part, int(round(tl[0])), int(round(tl[1])), part.rows, part.cols
        )
        s = float(np.dot(fparts[i], l2_normalize(phi)))
        ox = tl[0] - anchor_abs[0]
        oy = tl[1] - anchor_abs[1]
        s -= float(np.dot(dparts[i], l2_normalize(deformation_features(ox, oy))))
        last[i + 1] = s
    state.last_scores = last
    total = float(last.sum())
    state.score_history.append(total)
    window = config.dmk.reinit_streak + 1
    if len(state.score_history) > window:
        del state.score_history[: len(state.score_history) - window]
    return total


def aggregate(state, model, config):
    """Fuse root and part-projected centers into the new box center."""
    root = state.root
    c = state.reference_center
    alpha = config.dmk.alpha
    comp = model.components[state.component]
    scores = state.last_scores
    if not comp.parts or scores is None or np.abs(scores[1:]).sum() <= 0.0:
        c_new = root.center
    else:
        k = model.cell_size
        lam = model.lam
        l0 = root.level
        lp = part_level(l0, lam)
        rho = resolution_ratio(l0, lp, lam)
        s0 = 2.0 ** (-l0 / lam)
        sp = 2.0 ** (-lp / lam)
        num_x = 0.0
        num_y = 0.0
        denom = 0.0
        for i, part in enumerate(comp.parts):
            kern = state.kernels[i + 1]
            tl = _kernel_tl_cells(kern, part.rows, part.cols, sp, k)
            implied_root = (
                (tl[0] - state.anchors[i][0]) / rho,
                (tl[1] - state.anchors[i][1]) / rho,
            )
            ci = _center_from_tl(implied_root, comp.rows, comp.cols, s0, k)
            s = scores[i + 1]
            num_x += s * (ci[0] - c[0])
            num_y += s * (ci[1] - c[1])
            denom += abs(s)
        c_part = (c[0] + num_x / denom, c[1] + num_y / denom)
        c_new = (
            alpha * root.center[0] + (1.0 - alpha) * c_part[0],
            alpha * root.center[1] + (1.0 - alpha) * c_part[1],
        )
    state.reference_center = c_new
    return c_new


def scale_update(state, view, model, config):
    """Multiplicative box scale step from the density bandwidth derivative."""
    root = state.root
    comp = model.components[state.component]
    try:
        g = bandwidth_log_derivative(
            root.window, state.target_color[0], view.color_field,
            config.metric(), config.meanshift.delta_frac,
        )
    except (ZeroSupportError, ValidationError):
        return 0.0, False, True
    raw = config.dmk.beta * g
    ds = min(max(raw, -config.dmk.ds_clamp), config.dmk.ds_clamp)
    factor = 1.0 + ds
    state.box_size = (state.box_size[0] * factor, state.box_size[1] * factor)
    for kern in state.kernels:
        kern.size = (kern.size[0] * factor, kern.size[1] * factor)
    l0, clamped = level_for_object(
        state.box_size[0], state.box_size[1], comp.cols, comp.rows,
        model.cell_size, model.lam, view.pyramid.max_level,
    )
    root.level = l0
    lp = part_level(l0, model.lam)
    for kern in state.kernels[1:]:
        kern.level = lp
    state.level_clamped = state.level_clamped or clamped
    return ds, abs(raw) > config.dmk.ds_clamp, False


def check_reinit(score_history, config):
    """Reset test: low latest total, or a full streak of strict decreases."""
    if not score_history:
        return False
    if score_history[-1] < config.dmk.reinit_score:
        return True
    need = config.dmk.reinit_streak + 1
    if len(score_history) >= need:
        tail = score_history[-need:]
        if all(tail[i + 1] < tail[i] for i in range(need - 1)):
            return True
    return False


def reinitialize(state, view, model, config):
    """Re-seed from a nearby detection, else refresh histograms in place.

    Returns True when a detection re-seeded the state.
    """
    w, h = state.box_size
    cx, cy = state.reference_center
    frame = view.frame
    x0 = int(max(0, math.floor(cx - w)))
    x1 = int(min(frame.width, math.ceil(cx + w)))
    y0 = int(max(0, math.floor(cy - h)))
    y1 = int(min(frame.height, math.ceil(cy + h)))
    detection = None
    if x1 - x0 >= model.cell_size and y1 - y0 >= model.cell_size:
        crop = view.gray[y0:y1, x0:x1]
        try:
            pyr = FeaturePyramid(
                crop, lam=model.lam, cell_size=model.cell_size,
                max_levels=config.features.max_levels,
            )
            found = detect(
                model, pyr, stride=config.dpm.detect_stride,
                score_threshold=-1e30,
                part_radius=config.dpm.detect_part_radius,
                nms_iou=config.dpm.nms_iou,
            )
        except (ValidationError, ZeroSupportError):
            found = []
        current = state.box
        best = None
        for det in found:
            box = (det.box[0] + x0, det.box[1] + y0, det.box[2], det.box[3])
            if iou(box, current) > config.dmk.reinit_iou:
                if best is None or det.score > best[1]:
                    best = (box, det.score)
        if best is not None:
            detection = best[0]
    if detection is not None:
        try:
            fresh = init_dmk(view, detection, model, config)
        except (ValidationError, ZeroSupportError):
            fresh = None
        if fresh is not None:
            state.component = fresh.component
            state.kernels = fresh.kernels
            state.target_color = fresh.target_color
            state.target_texture = fresh.target_texture
            state.anchors = fresh.anchors
            state.box_size = fresh.box_size
            state.reference_center = fresh.reference_center
            state.last_scores = fresh.last_scores
            state.score_history = []
            return True
    # fallback: keep geometry, refresh the target histograms in place
    for i, kern in enumerate(state.kernels):
        try:
            state.target_color[i] = extract_histogram(view.color_field, kern.window)
            state.target_texture[i] = extract_histogram(view.texture_field, kern.window)
        except ZeroSupportError:
            pass
    state.score_history = []
    return False


KALMAN_F = np.array(
    [[1.0, 0, 1.0, 0], [0, 1.0, 0, 1.0], [0, 0, 1.0, 0], [0, 0, 0, 1.0]]
)
KALMAN_H = np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]])
# constant-velocity process noise shape for unit frame interval
KALMAN_G = np.array(
    [[0.25, 0, 0.5, 0], [0, 0.25, 0, 0.5], [0.5, 0, 1.0, 0], [0, 0.5, 0, 1.0]]
)


@dataclass
class KalmanState:
    state: np.ndarray  # (cx, cy, vx, vy)
    cov: np.ndarray  # 4x4


def kalman_init(center, r=4.0):
    return KalmanState(
        state=np.array([center[0], center[1], 0.0, 0.0]),
        cov=np.diag([r, r, 10.0, 10.0]),
    )


def _require_psd(cov):
    if not np.allclose(cov, cov.T, atol=1e-8):
        raise ValidationError("Kalman covariance must be symmetric")
    if np.linalg.eigvalsh(cov).min() < -1e-9:
        raise ValidationError("Kalman covariance must be positive semidefinite")


def kalman_predict(k, q=1.0):
    state = KALMAN_F @ k.state
    cov = KALMAN_F @ k.cov @ KALMAN_F.T + q * KALMAN_G
    return KalmanState(state=state, cov=(cov + cov.T) / 2.0)


def kalman_step(k, measurement, q=1.0, r=4.0):
    """Constant-velocity predict/update; returns the new state and position."""
    _require_psd(k.cov)
    pred = kalman_predict(k, q)
    innov = np.asarray(measurement, dtype=np.float64) - KALMAN_H @ pred.state
    s_mat = KALMAN_H @ pred.cov @ KALMAN_H.T + r * np.eye(2)
    gain = pred.cov @ KALMAN_H.T @ np.linalg.inv(s_mat)
    new_state = pred.state + gain @ innov
    new_cov = (np.eye(4) - gain @ KALMAN_H) @ pred.cov
    new_cov = (new_cov + new_cov.T) / 2.0
    out = KalmanState(state=new_state, cov=new_cov)
    return out, (float(new_state[0]), float(new_state[1]))


def track_frame(state, kalman, view, model, config):
    """One full tracking step. Returns (kalman', box, diagnostics)."""
    diag = {"errors": [], "reinit": False, "reseeded": False}
    frame = view.frame
    try:
        pos, iters = color_stage(state, view, config)
        diag["color_positions"] = pos
        diag["color_iterations"] = iters
    except DmkError as exc:
        diag["errors"].append(f"color: {exc}")
    try:
        pos, iters = texture_stage(state, view, config)
        diag["texture_positions"] = pos
        diag["texture_iterations"] = iters
    except DmkError as exc:
        diag["errors"].append(f"texture: {exc}")
    try:
        total = hog_stage(state, view, model, config)
        diag["total_score"] = total
    except DmkError as exc:
        diag["errors"].append(f"hog: {exc}")
        diag["total_score"] = float("nan")
    diag["hog_positions"] = [k.center for k in state.kernels]
    diag["scores"] = (
        list(state.last_scores) if state.last_scores is not None else []
    )

    if check_reinit(state.score_history, config):
        diag["reinit"] = True
        diag["reseeded"] = reinitialize(state, view, model, config)

    aggregate(state, model, config)
    ds, ds_clamped, ds_failed = scale_update(state, view, model, config)
    diag["ds"] = ds
    diag["ds_clamped"] = ds_clamped
    if ds_failed:
        diag["errors"].append("scale: empty density support")

    kalman, smoothed = kalman_step(
        kalman, state.reference_center, config.dmk.kalman_q, config.dmk.kalman_r
    )
    cx = min(max(smoothed[0], 0.0), frame.width - 1.0)
    cy = min(max(smoothed[1], 0.0), frame.height - 1.0)
    box = (cx, cy, state.box_size[0], state.box_size[1])
    diag["box"] = box
    return kalman, box, diag
