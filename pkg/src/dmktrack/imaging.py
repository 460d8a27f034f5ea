"""Frame ingestion, color conversion, gradients, and resampling.

All operations are pure functions; planes are float64 numpy arrays unless
stated otherwise. Input sequences are directories of PNG or binary PPM
stills, processed in lexicographic filename order.
"""

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import kernels
from .errors import ValidationError

FRAME_EXTENSIONS = (".png", ".ppm")


@dataclass
class Frame:
    rgb: np.ndarray  # uint8, shape (height, width, 3)
    index: int = 0

    def __post_init__(self):
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise ValidationError("frame buffer must have shape (h, w, 3)")
        if self.rgb.shape[0] < 1 or self.rgb.shape[1] < 1:
            raise ValidationError("frame must be at least 1x1")

    @property
    def height(self):
        return self.rgb.shape[0]

    @property
    def width(self):
        return self.rgb.shape[1]


@dataclass
class HsvFrame:
    hue: np.ndarray  # degrees in [0, 360)
    sat: np.ndarray  # [0, 1]
    val: np.ndarray  # [0, 1]


@dataclass
class GradientField:
    magnitude: np.ndarray
    orientation: np.ndarray  # radians in [0, pi)


def list_frames(directory):
    """Frame files under directory, lexicographic order."""
    try:
        names = sorted(os.listdir(directory))
    except OSError as exc:
        raise OSError(f"cannot list frame directory {directory!r}: {exc}") from exc
    paths = [
        os.path.join(directory, n)
        for n in names
        if n.lower().endswith(FRAME_EXTENSIONS)
    ]
    if not paths:
        raise ValidationError(f"no PNG/PPM frames found in {directory!r}")
    return paths


def load_frame(path, index=0):
    """Decode a PNG or binary PPM still into a Frame."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"frame file not found: {path!r}")
    try:
        with Image.open(path) as img:
            rgb = np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ValidationError(f"cannot decode frame {path!r}: {exc}") from exc
    return Frame(rgb=rgb, index=index)


def save_frame(path, rgb):
    """Write an (h, w, 3) uint8 buffer as PNG or PPM based on the suffix."""
    img = Image.fromarray(np.ascontiguousarray(rgb), mode="RGB")
    if path.lower().endswith(".ppm"):
        img.save(path, format="PPM")
    else:
        img.save(path, format="PNG")


def rgb_to_hsv(frame):
    hue, sat, val = kernels.rgb_to_hsv_planes(frame.rgb.astype(np.float64))
    return HsvFrame(hue=hue, sat=sat, val=val)


def hsv_to_rgb(hue, sat, val):
    """Inverse conversion, float64 planes -> uint8 RGB. Used by tests and synth."""
    h = np.mod(hue, 360.0) / 60.0
    i = np.floor(h).astype(np.int64) % 6
    f = h - np.floor(h)
    v = val * 255.0
    p = v * (1.0 - sat)
    q = v * (1.0 - sat * f)
    t = v * (1.0 - sat * (1.0 - f))
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    rgb = np.stack([r, g, b], axis=-1)
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def to_gray(frame):
    """Luma plane: 0.299 R + 0.587 G + 0.114 B."""
    rgb = frame.rgb.astype(np.float64)
    return rgb[:, :, 0] * 0.299 + rgb[:, :, 1] * 0.587 + rgb[:, :, 2] * 0.114


def compute_gradients(gray):
    """Central differences with replicated borders; unsigned orientation."""
    h, w = gray.shape
    if h < 3 or w < 3:
        raise ValidationError(f"gradients need at least 3x3 pixels, got {w}x{h}")
    padded = np.pad(gray, 1, mode="edge")
    gx = (padded[1:-1, 2:] - padded[1:-1, :-2]) * 0.5
    gy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) * 0.5
    magnitude = np.sqrt(gx * gx + gy * gy)
    orientation = np.mod(np.arctan2(gy, gx), np.pi)
    return GradientField(magnitude=magnitude, orientation=orientation)


def resample_plane(plane, scale):
    """Bilinear resample of one float plane; output dims round(dim * scale)."""
    if scale <= 0.0:
        raise ValidationError(f"resample scale must be positive, got {scale}")
    h, w = plane.shape
    oh = max(1, int(round(h * scale)))
    ow = max(1, int(round(w * scale)))
    if oh == h and ow == w:
        return plane.copy()
    return kernels.bilinear_resample(np.ascontiguousarray(plane, dtype=np.float64), oh, ow)


def resample(frame, scale):
    """Bilinear resample of a frame. scale in (0, 1]; identity at scale 1."""
    if scale <= 0.0:
        raise ValidationError(f"resample scale must be positive, got {scale}")
    if scale == 1.0:
        return Frame(rgb=frame.rgb.copy(), index=frame.index)
    planes = [
        resample_plane(frame.rgb[:, :, c].astype(np.float64), scale) for c in range(3)
    ]
    rgb = np.clip(np.rint(np.stack(planes, axis=-1)), 0, 255).astype(np.uint8)
    return Frame(rgb=rgb, index=frame.index)
