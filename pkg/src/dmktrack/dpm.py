"""Deformable part models: schema, scoring, template building, detection.

A model is a mixture of components, each holding a root filter, part
filters sampled at twice the root resolution, per-part anchors and
quadratic deformation costs, and a bias. Anchors live in part-grid cell
units relative to the scaled root position.
"""

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ModelFormatError, ValidationError
from .features import (
    DEFAULT_CELL_SIZE,
    DEFAULT_LAMBDA,
    FeaturePyramid,
    HOG_BINS,
    hog_window,
    level_for_object,
    part_level,
)
from .imaging import to_gray

FORMAT_VERSION = 1
DEFAULT_DEFORM = (0.05, 0.0, 0.05, 0.0)


@dataclass
class PartModel:
    weights: np.ndarray  # (rows, cols, 9)
    anchor: tuple  # (ax, ay) part-grid cells
    deform: np.ndarray  # coefficients of (dx^2, dx, dy^2, dy)

    @property
    def rows(self):
        return self.weights.shape[0]

    @property
    def cols(self):
        return self.weights.shape[1]


@dataclass
class DpmComponent:
    root: np.ndarray  # (rows, cols, 9)
    bias: float = 0.0
    parts: list = field(default_factory=list)

    @property
    def rows(self):
        return self.root.shape[0]

    @property
    def cols(self):
        return self.root.shape[1]


@dataclass
class DpmModel:
    components: list
    cell_size: int = DEFAULT_CELL_SIZE
    lam: int = DEFAULT_LAMBDA


@dataclass
class Detection:
    box: tuple  # (cx, cy, w, h) native pixels
    score: float
    component: int
    level: int


def _validate_filter(weights, rows, cols, where):
    if rows < 1 or cols < 1:
        raise ModelFormatError(f"{where}: filter dims must be >= 1, got {rows}x{cols}")
    if weights.size != rows * cols * HOG_BINS:
        raise ModelFormatError(
            f"{where}: expected {rows * cols * HOG_BINS} weights, got {weights.size}"
        )
    return weights.reshape(rows, cols, HOG_BINS).astype(np.float64)


def _parse_component(entry, index):
    where = f"component {index}"
    try:
        root_spec = entry["root"]
        root = _validate_filter(
            np.asarray(root_spec["weights"], dtype=np.float64),
            int(root_spec["rows"]), int(root_spec["cols"]), f"{where} root",
        )
        bias = float(entry.get("bias", 0.0))
        parts = []
        for pi, pspec in enumerate(entry.get("parts", [])):
            pwhere = f"{where} part {pi}"
            weights = _validate_filter(
                np.asarray(pspec["weights"], dtype=np.float64),
                int(pspec["rows"]), int(pspec["cols"]), pwhere,
            )
            deform = np.asarray(pspec["deform"], dtype=np.float64)
            if deform.shape != (4,):
                raise ModelFormatError(f"{pwhere}: deform must have 4 coefficients")
            if deform[0] < 0 or deform[2] < 0:
                raise ModelFormatError(
                    f"{pwhere}: quadratic deformation coefficients must be >= 0"
                )
            anchor = tuple(float(a) for a in pspec["anchor"])
            if len(anchor) != 2:
                raise ModelFormatError(f"{pwhere}: anchor must be (ax, ay)")
            parts.append(PartModel(weights=weights, anchor=anchor, deform=deform))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{where}: {exc}") from exc
    return DpmComponent(root=root, bias=bias, parts=parts)


def load_model(path):
    """Load and validate a model file."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"model file not found: {path!r}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"cannot parse model {path!r}: {exc}") from exc
    if not isinstance(doc, dict) or "components" not in doc:
        raise ModelFormatError(f"model {path!r} lacks a components list")
    components = [
        _parse_component(entry, i) for i, entry in enumerate(doc["components"])
    ]
    if not components:
        raise ModelFormatError(f"model {path!r} must define at least one component")
    return DpmModel(
        components=components,
        cell_size=int(doc.get("cell_size", DEFAULT_CELL_SIZE)),
        lam=int(doc.get("lambda", DEFAULT_LAMBDA)),
    )


def save_model(model, path):
    doc = {
        "format_version": FORMAT_VERSION,
        "cell_size": model.cell_size,
        "lambda": model.lam,
        "components": [
            {
                "bias": comp.bias,
                "root": {
                    "rows": comp.rows,
                    "cols": comp.cols,
                    "weights": comp.root.reshape(-1).tolist(),
                },
                "parts": [
                    {
                        "rows": p.rows,
                        "cols": p.cols,
                        "weights": p.weights.reshape(-1).tolist(),
                        "anchor": list(p.anchor),
                        "deform": p.deform.tolist(),
                    }
                    for p in comp.parts
                ],
            }
            for comp in model.components
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def select_component(model, w, h):
    """Component whose root aspect ratio is log-closest to the box ratio."""
    if w <= 0 or h <= 0:
        raise ValidationError(f"box dims must be positive, got {w}x{h}")
    target = math.log(w / h)
    dists = [
        abs(math.log(comp.cols / comp.rows) - target) for comp in model.components
    ]
    return int(np.argmin(dists))


def deformation_features(dx, dy):
    return np.array([dx * dx, dx, dy * dy, dy], dtype=np.float64)


def resolution_ratio(root_level, part_lvl, lam=DEFAULT_LAMBDA):
    """Cell-coordinate scale factor from root level to part level.

    Exactly 2 when parts sit a full octave below the root; smaller when the
    part level was clamped at 0.
    """
    return 2.0 ** ((root_level - part_lvl) / lam)


def l2_normalize(v):
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def hypothesis_score(component, pyramid, hypothesis):
    """Filter responses minus deformation costs plus bias for one placement.

    hypothesis is [(x, y, level), ...] for the root followed by each part.
    """
    if len(hypothesis) != len(component.parts) + 1:
        raise ValidationError(
            f"hypothesis has {len(hypothesis)} positions for "
            f"{len(component.parts)} parts"
        )
    x0, y0, l0 = hypothesis[0]
    expected = part_level(l0, pyramid.lam)
    score = float(
        np.dot(
            component.root.reshape(-1),
            hog_window(pyramid.level(l0), int(x0), int(y0), component.rows, component.cols),
        )
    ) + component.bias
    rho = resolution_ratio(l0, expected, pyramid.lam)
    for part, (xi, yi, li) in zip(component.parts, hypothesis[1:]):
        if li != expected:
            raise ValidationError(
                f"part level {li} does not match root level {l0} minus one octave"
            )
        score += float(
            np.dot(
                part.weights.reshape(-1),
                hog_window(pyramid.level(li), int(xi), int(yi), part.rows, part.cols),
            )
        )
        dx = xi - (rho * x0 + part.anchor[0])
        dy = yi - (rho * y0 + part.anchor[1])
        score -= float(np.dot(part.deform, deformation_features(dx, dy)))
    return score


def kernel_similarity(i, component, pyramid, p, dx):
    """Normalized filter response minus normalized deformation cost (parts only)."""
    filt = component.root if i == 0 else component.parts[i - 1].weights
    rows, cols = filt.shape[0], filt.shape[1]
    x, y, level = p
    phi = hog_window(pyramid.level(level), int(x), int(y), rows, cols)
    s = float(np.dot(l2_normalize(filt.reshape(-1)), l2_normalize(phi)))
    if i > 0:
        part = component.parts[i - 1]
        phi_d = l2_normalize(deformation_features(dx[0], dx[1]))
        s -= float(np.dot(l2_normalize(part.deform), phi_d))
    return s


def similarity_from_features(filt, phi, deform=None, dx=None):
    """kernel_similarity on pre-gathered features; used by the HOG stage."""
    s = float(np.dot(l2_normalize(filt.reshape(-1)), l2_normalize(phi)))
    if deform is not None:
        phi_d = l2_normalize(deformation_features(dx[0], dx[1]))
        s -= float(np.dot(l2_normalize(deform), phi_d))
    return s


def build_template_model(frame, box, n_parts=4, part_cells=3,
                         cell_size=DEFAULT_CELL_SIZE, lam=DEFAULT_LAMBDA):
    """Single-component model synthesized from one exemplar box.

    The root filter is the HOG of the box at its own pyramid level; parts
    are placed greedily on the highest-energy disjoint windows at the part
    level and anchored there.
    """
    cx, cy, w, h = box
    if w <= 0 or h <= 0:
        raise ValidationError("template box must have positive size")
    if (cx - w / 2 < -0.5 or cy - h / 2 < -0.5
            or cx + w / 2 > frame.width - 0.5 or cy + h / 2 > frame.height - 0.5):
        raise ValidationError("template box must lie inside the frame")
    c0 = int(round(w / cell_size))
    r0 = int(round(h / cell_size))
    if c0 < 2 or r0 < 2:
        raise ValidationError(
            f"box {w:.0f}x{h:.0f} too small for a {cell_size}px cell grid"
        )
    gray = to_gray(frame)
    pyramid = FeaturePyramid(gray, lam=lam, cell_size=cell_size)
    l0, _ = level_for_object(w, h, c0, r0, cell_size, lam, pyramid.max_level)
    lp = part_level(l0, lam)
    rho = resolution_ratio(l0, lp, lam)
    s0 = pyramid.scale(l0)

    tl_x = (cx - w / 2) * s0 / cell_size
    tl_y = (cy - h / 2) * s0 / cell_size
    root = hog_window(
        pyramid.level(l0), int(round(tl_x)), int(round(tl_y)), r0, c0
    ).reshape(r0, c0, HOG_BINS)

    parts = []
    if n_parts > 0:
        pmap = pyramid.level(lp)
        px0 = int(round(rho * tl_x))
        py0 = int(round(rho * tl_y))
        pw = int(round(rho * c0))
        ph = int(round(rho * r0))
        if pw < part_cells or ph < part_cells:
            raise ValidationError(
                f"box spans {pw}x{ph} part cells, too small for "
                f"{part_cells}x{part_cells} parts"
            )
        energy = (pmap.cells**2).sum(axis=2)
        region = np.zeros((ph, pw), dtype=np.float64)
        ry0, ry1 = max(0, py0), min(pmap.rows, py0 + ph)
        rx0, rx1 = max(0, px0), min(pmap.cols, px0 + pw)
        if ry0 < ry1 and rx0 < rx1:
            region[ry0 - py0 : ry1 - py0, rx0 - px0 : rx1 - px0] = energy[ry0:ry1, rx0:rx1]
        # window energy for every part_cells x part_cells placement in the box
        csum = region.cumsum(axis=0).cumsum(axis=1)
        padded = np.pad(csum, ((1, 0), (1, 0)))
        wsum = (
            padded[part_cells:, part_cells:]
            - padded[:-part_cells, part_cells:]
            - padded[part_cells:, :-part_cells]
            + padded[:-part_cells, :-part_cells]
        )
        avail = np.ones(wsum.shape, dtype=bool)
        for _ in range(n_parts):
            if not avail.any():
                raise ValidationError(
                    f"cannot place {n_parts} disjoint {part_cells}x{part_cells} parts"
                )
            masked = np.where(avail, wsum, -np.inf)
            flat = int(np.argmax(masked))
            ay, ax = divmod(flat, wsum.shape[1])
            y_abs = py0 + ay
            x_abs = px0 + ax
            weights = hog_window(pmap, x_abs, y_abs, part_cells, part_cells)
            parts.append(
                PartModel(
                    weights=weights.reshape(part_cells, part_cells, HOG_BINS),
                    anchor=(x_abs - rho * tl_x, y_abs - rho * tl_y),
                    deform=np.array(DEFAULT_DEFORM, dtype=np.float64),
                )
            )
            oy0 = max(0, ay - part_cells + 1)
            ox0 = max(0, ax - part_cells + 1)
            avail[oy0 : ay + part_cells, ox0 : ax + part_cells] = False

    component = DpmComponent(root=root, bias=0.0, parts=parts)
    return DpmModel(components=[component], cell_size=cell_size, lam=lam)


def iou(box_a, box_b):
    """Intersection over union of two (cx, cy, w, h) boxes."""
    ax0, ay0 = box_a[0] - box_a[2] / 2, box_a[1] - box_a[3] / 2
    ax1, ay1 = box_a[0] + box_a[2] / 2, box_a[1] + box_a[3] / 2
    bx0, by0 = box_b[0] - box_b[2] / 2, box_b[1] - box_b[3] / 2
    bx1, by1 = box_b[0] + box_b[2] / 2, box_b[1] + box_b[3] / 2
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = box_a[2] * box_a[3] + box_b[2] * box_b[3] - inter
    return inter / union if union > 0 else 0.0


def _part_best_scores(part, resp, anchors_x, anchors_y, radius):
    """Best locally-refined part score for each root placement (vectorized)."""
    rr, cc = resp.shape
    base_x = np.rint(anchors_x).astype(np.int64)
    base_y = np.rint(anchors_y).astype(np.int64)
    best = np.full(anchors_x.shape, -np.inf)
    d1, d2, d3, d4 = part.deform
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            px = base_x + dx
            py = base_y + dy
            inside = (px >= 0) & (px < cc) & (py >= 0) & (py < rr)
            r = np.where(
                inside, resp[np.clip(py, 0, rr - 1), np.clip(px, 0, cc - 1)], 0.0
            )
            ox = px - anchors_x
            oy = py - anchors_y
            cost = d1 * ox * ox + d2 * ox + d3 * oy * oy + d4 * oy
            best = np.maximum(best, r - cost)
    return best


def detect(model, pyramid, stride=2, score_threshold=0.0, part_radius=2,
           nms_iou=0.5):
    """Scan every component over the stride grid of every pyramid level.

    Parts are refined locally around their anchors; overlapping hits are
    suppressed greedily at IoU > nms_iou.
    """
    if pyramid.num_levels < 1:
        raise ValidationError("detect needs a non-empty pyramid")
    k = model.cell_size
    raw = []
    part_resp_cache = {}
    for ci, comp in enumerate(model.components):
        for level in range(pyramid.num_levels):
            hm = pyramid.level(level)
            resp0 = kernels.correlate_cells(hm.cells, comp.root)
            if resp0.size == 0:
                continue
            ys = np.arange(0, resp0.shape[0], stride)
            xs = np.arange(0, resp0.shape[1], stride)
            gy, gx = np.meshgrid(ys, xs, indexing="ij")
            score = resp0[gy, gx] + comp.bias
            lp = part_level(level, pyramid.lam)
            rho = resolution_ratio(level, lp, pyramid.lam)
            pmap = pyramid.level(lp)
            for pi, part in enumerate(comp.parts):
                key = (ci, pi, lp)
                if key not in part_resp_cache:
                    part_resp_cache[key] = kernels.correlate_cells(
                        pmap.cells, part.weights
                    )
                presp = part_resp_cache[key]
                if presp.size == 0:
                    continue
                anchors_x = rho * gx + part.anchor[0]
                anchors_y = rho * gy + part.anchor[1]
                score = score + _part_best_scores(
                    part, presp, anchors_x, anchors_y, part_radius
                )
            s_level = pyramid.scale(level)
            keep = np.argwhere(score >= score_threshold)
            for iy, ix in keep:
                x = xs[ix]
                y = ys[iy]
                box = (
                    (x + comp.cols / 2) * k / s_level,
                    (y + comp.rows / 2) * k / s_level,
                    comp.cols * k / s_level,
                    comp.rows * k / s_level,
                )
                raw.append(Detection(box=box, score=float(score[iy, ix]),
                                     component=ci, level=level))
    raw.sort(key=lambda d: (-d.score, d.level, d.component, d.box[1], d.box[0]))
    kept = []
    for det in raw:
        if all(iou(det.box, other.box) <= nms_iou for other in kept):
            kept.append(det)
    return kept
