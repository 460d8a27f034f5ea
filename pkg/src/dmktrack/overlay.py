"""Overlay rendering: boxes and id labels burned into copies of the frames.

Labels use a built-in 3x5 digit font so output never depends on system
fonts; colors are keyed deterministically by track id.
"""

import os

import numpy as np

from .evaluate import read_trajectory
from .imaging import list_frames, load_frame, save_frame

PALETTE = (
    (255, 80, 80),
    (80, 220, 80),
    (90, 140, 255),
    (250, 220, 60),
    (230, 90, 230),
    (70, 230, 230),
    (255, 160, 70),
    (180, 255, 120),
)

DIGITS = {
    "0": ("111", "101", "101", "101", "111"),
    "1": ("010", "110", "010", "010", "111"),
    "2": ("111", "001", "111", "100", "111"),
    "3": ("111", "001", "111", "001", "111"),
    "4": ("101", "101", "111", "001", "001"),
    "5": ("111", "100", "111", "001", "111"),
    "6": ("111", "100", "111", "101", "111"),
    "7": ("111", "001", "010", "010", "010"),
    "8": ("111", "101", "111", "101", "111"),
    "9": ("111", "101", "111", "001", "111"),
}


def draw_box(rgb, box, color, thickness=2):
    h, w = rgb.shape[:2]
    cx, cy, bw, bh = box
    x0 = int(round(cx - bw / 2))
    x1 = int(round(cx + bw / 2))
    y0 = int(round(cy - bh / 2))
    y1 = int(round(cy + bh / 2))
    color = np.array(color, dtype=np.uint8)
    for t in range(thickness):
        xa, xb = max(0, x0 + t), min(w, x1 - t + 1)
        ya, yb = max(0, y0 + t), min(h, y1 - t + 1)
        if xa >= xb or ya >= yb:
            continue
        if 0 <= y0 + t < h:
            rgb[y0 + t, xa:xb] = color
        if 0 <= y1 - t < h:
            rgb[y1 - t, xa:xb] = color
        if 0 <= x0 + t < w:
            rgb[ya:yb, x0 + t] = color
        if 0 <= x1 - t < w:
            rgb[ya:yb, x1 - t] = color
    return x0, y0


def draw_label(rgb, text, x, y, color, scale=2):
    h, w = rgb.shape[:2]
    color = np.array(color, dtype=np.uint8)
    cursor = x
    for ch in text:
        glyph = DIGITS.get(ch)
        if glyph is None:
            cursor += 4 * scale
            continue
        for gy, rowbits in enumerate(glyph):
            for gx, bit in enumerate(rowbits):
                if bit != "1":
                    continue
                py0 = y + gy * scale
                px0 = cursor + gx * scale
                ya, yb = max(0, py0), min(h, py0 + scale)
                xa, xb = max(0, px0), min(w, px0 + scale)
                if ya < yb and xa < xb:
                    rgb[ya:yb, xa:xb] = color
        cursor += 4 * scale


def render_overlay(rgb, boxes):
    """Draw (track_id, box) pairs onto one frame buffer in place."""
    for tid, box in boxes:
        color = PALETTE[tid % len(PALETTE)]
        x0, y0 = draw_box(rgb, box, color)
        draw_label(rgb, str(tid), x0 + 2, max(0, y0 - 12), color)


def overlay_frames(frames_dir, trajectory_path, out_dir):
    """Annotate every frame; returns warnings for frame/trajectory mismatch."""
    tracks = read_trajectory(trajectory_path)
    by_frame = {}
    for tid, traj in tracks.items():
        for frame, box in traj.items():
            by_frame.setdefault(frame, []).append((tid, box))
    warnings = []
    os.makedirs(out_dir, exist_ok=True)
    paths = list_frames(frames_dir)
    for index, path in enumerate(paths):
        frame = load_frame(path, index)
        rgb = frame.rgb.copy()
        boxes = sorted(by_frame.pop(index, []))
        render_overlay(rgb, boxes)
        base = os.path.splitext(os.path.basename(path))[0] + ".png"
        save_frame(os.path.join(out_dir, base), rgb)
    if by_frame:
        warnings.append(
            f"{len(by_frame)} trajectory frames beyond the frame sequence"
        )
    return warnings
