"""Deterministic synthetic scenes with exact ground truth.

Rendering uses integer hashing for all noise and only +,-,*,/,sqrt in the
per-pixel path, so a seed fully determines every pixel on every platform.
Targets are textured ellipses with embedded part blobs; the background is
a low-contrast plaid that pans to emulate camera ego-motion; occluders are
static rectangles active over a frame range.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .imaging import Frame, hsv_to_rgb


@dataclass
class PathLeg:
    frames: int
    velocity: tuple  # (vx, vy) px/frame


@dataclass
class TargetSpec:
    start: tuple  # (x, y) center at frame 0
    body: tuple  # ellipse semi-axes (a, b) px at unit scale
    legs: list
    hue: float = 30.0
    sat: float = 0.85
    val: float = 0.9
    texture: str = "stripes"  # stripes | spots | flat
    stripe_val_amp: float = 0.22
    stripe_sat_amp: float = 0.1
    growth: float = 1.0  # per-frame multiplicative scale
    parts: tuple = (
        (-0.45, -0.35, 0.28, -0.35),
        (-0.45, 0.35, 0.28, -0.35),
        (0.5, 0.0, 0.38, 0.3),
        (0.05, 0.0, 0.25, -0.5),
    )  # (u, v, radius, value offset) blobs in body coordinates


@dataclass
class OccluderSpec:
    rect: tuple  # (x0, y0, x1, y1)
    color: tuple = (90, 90, 90)
    frames: tuple = (0, 10**9)  # active range [start, end)


@dataclass
class BackgroundSpec:
    hue: float = 210.0
    sat: float = 0.35
    val: float = 0.5
    pan: tuple = (0.0, 0.0)  # px/frame ego-motion
    noise_sigma: float = 4.0  # static sensor-noise amplitude, RGB counts
    plaid_period: int = 16
    plaid_amp: float = 0.05
    cell_amp: float = 0.06


@dataclass
class SceneSpec:
    width: int = 640
    height: int = 480
    duration: int = 100
    seed: int = 1
    background: BackgroundSpec = field(default_factory=BackgroundSpec)
    targets: list = field(default_factory=list)
    occluders: list = field(default_factory=list)


def _hash01(ix, iy, seed):
    """Integer-mixed uniform values in [0, 1); wraps in uint64 arithmetic."""
    seed_mix = np.uint64((int(seed) * 1442695040888963407) % (1 << 64))
    h = (
        ix.astype(np.uint64) * np.uint64(374761393)
        + iy.astype(np.uint64) * np.uint64(668265263)
        + seed_mix
    )
    h ^= h >> np.uint64(13)
    h *= np.uint64(1274126177)
    h ^= h >> np.uint64(16)
    return (h & np.uint64(0xFFFFFF)).astype(np.float64) / float(0x1000000)


def target_pose(target, t):
    """Center, heading unit vector, and scale at frame t."""
    x, y = target.start
    remaining = t
    vx, vy = (target.legs[0].velocity if target.legs else (1.0, 0.0))
    for leg in target.legs:
        step_frames = min(remaining, leg.frames)
        x += leg.velocity[0] * step_frames
        y += leg.velocity[1] * step_frames
        remaining -= step_frames
        if remaining <= 0 or step_frames > 0:
            vx, vy = leg.velocity
        if remaining <= 0:
            break
    norm = math.hypot(vx, vy)
    heading = (vx / norm, vy / norm) if norm > 0 else (1.0, 0.0)
    scale = 1.0
    for _ in range(t):
        scale *= target.growth
    return (x, y), heading, scale


def target_truth_box(target, t):
    """Axis-aligned bounding box (cx, cy, w, h) of the body ellipse."""
    (cx, cy), (c, s), scale = target_pose(target, t)
    a = target.body[0] * scale
    b = target.body[1] * scale
    half_w = math.sqrt((a * c) ** 2 + (b * s) ** 2)
    half_h = math.sqrt((a * s) ** 2 + (b * c) ** 2)
    return (cx, cy, 2.0 * half_w, 2.0 * half_h)


def _render_target(rgb, target, t, spec):
    """Draw one target; returns its boolean pixel mask."""
    h, w = rgb.shape[:2]
    (cx, cy), (hc, hs), scale = target_pose(target, t)
    a = target.body[0] * scale
    b = target.body[1] * scale
    half_w = math.sqrt((a * hc) ** 2 + (b * hs) ** 2)
    half_h = math.sqrt((a * hs) ** 2 + (b * hc) ** 2)
    x0 = max(0, int(math.floor(cx - half_w)))
    x1 = min(w, int(math.ceil(cx + half_w)) + 1)
    y0 = max(0, int(math.floor(cy - half_h)))
    y1 = min(h, int(math.ceil(cy + half_h)) + 1)
    mask = np.zeros((h, w), dtype=bool)
    if x0 >= x1 or y0 >= y1:
        return mask
    xs = np.arange(x0, x1, dtype=np.float64) - cx
    ys = np.arange(y0, y1, dtype=np.float64) - cy
    gx, gy = np.meshgrid(xs, ys)
    u = (gx * hc + gy * hs) / a
    v = (-gx * hs + gy * hc) / b
    inside = u * u + v * v <= 1.0
    if not inside.any():
        return mask

    val = np.full(inside.shape, target.val)
    sat = np.full(inside.shape, target.sat)
    if target.texture == "stripes":
        band = np.floor((u + 1.0) * 3.0).astype(np.int64) % 2
        val = val - target.stripe_val_amp * band
        sat = sat - target.stripe_sat_amp * band
    elif target.texture == "spots":
        spot = _hash01(
            np.floor((u + 1.0) * 6.0).astype(np.int64),
            np.floor((v + 1.0) * 6.0).astype(np.int64),
            np.uint64(spec.seed ^ 0x5F5F),
        )
        val = val - 0.25 * (spot > 0.5)
    for pu, pv, pr, pdv in target.parts:
        blob = ((u - pu) / pr) ** 2 + ((v - pv) / pr) ** 2 <= 1.0
        val = np.where(blob, target.val + pdv, val)
        sat = np.where(blob, target.sat, sat)
    val = np.clip(val, 0.0, 1.0)
    sat = np.clip(sat, 0.0, 1.0)
    hue = np.full(inside.shape, target.hue)
    colors = hsv_to_rgb(hue, sat, val)
    region = rgb[y0:y1, x0:x1]
    region[inside] = colors[inside]
    mask[y0:y1, x0:x1] = inside
    return mask


def render_scene(spec, t):
    """Render frame t. Returns (Frame, truth rows, per-target masks).

    Truth rows are (target_index, cx, cy, w, h, visible_fraction).
    """
    if t < 0 or t >= spec.duration:
        raise ValidationError(f"frame {t} outside scene duration {spec.duration}")
    bg = spec.background
    h, w = spec.height, spec.width
    xs = np.arange(w, dtype=np.float64) + bg.pan[0] * t
    ys = np.arange(h, dtype=np.float64) + bg.pan[1] * t
    wx, wy = np.meshgrid(xs, ys)
    iwx = np.floor(wx).astype(np.int64)
    iwy = np.floor(wy).astype(np.int64)
    plaid = ((iwx // bg.plaid_period + iwy // bg.plaid_period) % 2).astype(np.float64)
    cellv = _hash01(iwx // 4, iwy // 4, spec.seed)
    val = np.clip(
        bg.val + bg.plaid_amp * (plaid - 0.5) + bg.cell_amp * (cellv - 0.5), 0.0, 1.0
    )
    hue = np.full((h, w), bg.hue)
    sat = np.full((h, w), bg.sat)
    rgb = hsv_to_rgb(hue, sat, val).astype(np.int64)

    # static sensor noise in frame coordinates
    if bg.noise_sigma > 0:
        fx, fy = np.meshgrid(np.arange(w, dtype=np.int64), np.arange(h, dtype=np.int64))
        noise = (_hash01(fx, fy, spec.seed ^ 0xA5A5) - 0.5) * 2.0 * bg.noise_sigma
        rgb = rgb + np.rint(noise).astype(np.int64)[:, :, None]
    rgb = np.clip(rgb, 0, 255).astype(np.uint8)

    masks = []
    for target in spec.targets:
        masks.append(_render_target(rgb, target, t, spec))

    occluded = np.zeros((h, w), dtype=bool)
    for occ in spec.occluders:
        if not (occ.frames[0] <= t < occ.frames[1]):
            continue
        ox0, oy0, ox1, oy1 = (int(v) for v in occ.rect)
        ox0, oy0 = max(0, ox0), max(0, oy0)
        ox1, oy1 = min(w, ox1), min(h, oy1)
        if ox0 >= ox1 or oy0 >= oy1:
            continue
        rgb[oy0:oy1, ox0:ox1] = np.array(occ.color, dtype=np.uint8)
        occluded[oy0:oy1, ox0:ox1] = True

    truth = []
    for idx, (target, mask) in enumerate(zip(spec.targets, masks)):
        total = int(mask.sum())
        if total == 0:
            visible = 0.0
        else:
            visible = float((mask & ~occluded).sum()) / total
        cx, cy, bw, bh = target_truth_box(target, t)
        truth.append((idx, cx, cy, bw, bh, visible))
    return Frame(rgb=rgb, index=t), truth, masks


def scenario_library():
    """Named benchmark scenes exercising the tracker's failure modes."""
    fish = dict(body=(45.0, 25.0), hue=30.0, sat=0.85, val=0.9, texture="stripes")
    scenes = {}

    scenes["S1"] = SceneSpec(
        duration=200, seed=101,
        background=BackgroundSpec(pan=(-1.25, 0.375)),
        targets=[TargetSpec(start=(140.0, 170.0),
                            legs=[PathLeg(200, (1.75, 0.5))], **fish)],
    )

    scenes["S2"] = SceneSpec(
        duration=150, seed=102,
        background=BackgroundSpec(pan=(-0.75, 0.25)),
        targets=[TargetSpec(start=(150.0, 240.0),
                            legs=[PathLeg(150, (2.0, 0.0))], **fish)],
        occluders=[OccluderSpec(rect=(296, 150, 326, 360), color=(70, 75, 80),
                                frames=(65, 95))],
    )

    scenes["S3"] = SceneSpec(
        duration=120, seed=103,
        background=BackgroundSpec(pan=(-0.5, 0.25)),
        targets=[TargetSpec(start=(140.0, 160.0),
                            legs=[PathLeg(60, (2.0, 0.0)), PathLeg(60, (0.0, 4.0))],
                            **fish)],
    )

    scenes["S4"] = SceneSpec(
        duration=100, seed=104,
        background=BackgroundSpec(pan=(-0.5, 0.125)),
        targets=[TargetSpec(start=(300.0, 230.0),
                            legs=[PathLeg(100, (0.5, 0.25))],
                            body=(36.0, 20.0), growth=1.01,
                            hue=30.0, sat=0.85, val=0.9, texture="stripes")],
    )

    scenes["S5"] = SceneSpec(
        duration=200, seed=105,
        background=BackgroundSpec(pan=(-0.625, 0.25)),
        targets=[
            TargetSpec(start=(120.0, 165.0), legs=[PathLeg(200, (1.75, 0.5))], **fish),
            TargetSpec(start=(510.0, 240.0), legs=[PathLeg(200, (-1.75, 0.25))],
                       body=(45.0, 25.0), hue=45.0, sat=0.85, val=0.9,
                       texture="stripes"),
        ],
    )

    # S6: the target's HSV bins coincide with the background's, so only
    # texture and gradients can separate it from the panning backdrop.
    scenes["S6"] = SceneSpec(
        duration=160, seed=106,
        background=BackgroundSpec(pan=(-1.25, 0.375)),
        targets=[TargetSpec(start=(150.0, 190.0),
                            legs=[PathLeg(160, (1.75, 0.5))],
                            body=(45.0, 25.0), hue=214.0, sat=0.35, val=0.52,
                            texture="stripes",
                            stripe_val_amp=0.06, stripe_sat_amp=0.0,
                            parts=((-0.45, -0.35, 0.28, -0.08),
                                   (-0.45, 0.35, 0.28, -0.08),
                                   (0.5, 0.0, 0.38, 0.06),
                                   (0.05, 0.0, 0.25, -0.08)))],
    )
    return scenes


def spec_to_dict(spec):
    return {
        "width": spec.width,
        "height": spec.height,
        "duration": spec.duration,
        "seed": spec.seed,
        "background": {
            "hue": spec.background.hue,
            "sat": spec.background.sat,
            "val": spec.background.val,
            "pan": list(spec.background.pan),
            "noise_sigma": spec.background.noise_sigma,
            "plaid_period": spec.background.plaid_period,
            "plaid_amp": spec.background.plaid_amp,
            "cell_amp": spec.background.cell_amp,
        },
        "targets": [
            {
                "start": list(tg.start),
                "body": list(tg.body),
                "legs": [
                    {"frames": leg.frames, "velocity": list(leg.velocity)}
                    for leg in tg.legs
                ],
                "hue": tg.hue,
                "sat": tg.sat,
                "val": tg.val,
                "texture": tg.texture,
                "stripe_val_amp": tg.stripe_val_amp,
                "stripe_sat_amp": tg.stripe_sat_amp,
                "growth": tg.growth,
                "parts": [list(p) for p in tg.parts],
            }
            for tg in spec.targets
        ],
        "occluders": [
            {
                "rect": list(occ.rect),
                "color": list(occ.color),
                "frames": list(occ.frames),
            }
            for occ in spec.occluders
        ],
    }


def spec_from_dict(doc):
    try:
        bg = doc.get("background", {})
        background = BackgroundSpec(
            hue=bg.get("hue", 210.0),
            sat=bg.get("sat", 0.35),
            val=bg.get("val", 0.5),
            pan=tuple(bg.get("pan", (0.0, 0.0))),
            noise_sigma=bg.get("noise_sigma", 4.0),
            plaid_period=bg.get("plaid_period", 16),
            plaid_amp=bg.get("plaid_amp", 0.05),
            cell_amp=bg.get("cell_amp", 0.06),
        )
        targets = [
            TargetSpec(
                start=tuple(tg["start"]),
                body=tuple(tg["body"]),
                legs=[
                    PathLeg(frames=int(leg["frames"]),
                            velocity=tuple(leg["velocity"]))
                    for leg in tg["legs"]
                ],
                hue=tg.get("hue", 30.0),
                sat=tg.get("sat", 0.85),
                val=tg.get("val", 0.9),
                texture=tg.get("texture", "stripes"),
                stripe_val_amp=tg.get("stripe_val_amp", 0.22),
                stripe_sat_amp=tg.get("stripe_sat_amp", 0.1),
                growth=tg.get("growth", 1.0),
                parts=tuple(tuple(p) for p in tg.get("parts", TargetSpec.parts)),
            )
            for tg in doc.get("targets", [])
        ]
        occluders = [
            OccluderSpec(
                rect=tuple(occ["rect"]),
                color=tuple(occ.get("color", (90, 90, 90))),
                frames=tuple(occ.get("frames", (0, 10**9))),
            )
            for occ in doc.get("occluders", [])
        ]
        return SceneSpec(
            width=int(doc.get("width", 640)),
            height=int(doc.get("height", 480)),
            duration=int(doc.get("duration", 100)),
            seed=int(doc.get("seed", 1)),
            background=background,
            targets=targets,
            occluders=occluders,
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"bad scene spec: {exc}") from exc


def load_scene(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"cannot parse scene {path!r}: {exc}") from exc
    return spec_from_dict(doc)


def save_scene(spec, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec_to_dict(spec), fh, indent=1)
        fh.write("\n")
