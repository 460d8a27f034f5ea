"""Kernel features: weighted color/texture histograms and the HOG pyramid.

Histograms weight each pixel with the Epanechnikov profile k(u) = max(0, 1-u)
where u is the squared normalized distance from the window center, with a
separate bandwidth per axis equal to the window half-size.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ValidationError, ZeroSupportError
from .imaging import compute_gradients, resample_plane

COLOR_LAYOUT = "color_15x8x8"
LBP_LAYOUT = "lbp_riu2_10"
COLOR_BINS = (15, 8, 8)
LBP_BINS = 10
HOG_BINS = 9
DEFAULT_CELL_SIZE = 8
DEFAULT_LAMBDA = 10
HOG_TRUNCATION = 0.2
HOG_EPS = 1e-6


@dataclass
class Histogram:
    bins: np.ndarray
    layout: str


@dataclass
class KernelWindow:
    center: tuple  # (cx, cy) pixels, real-valued
    half: tuple  # (hx, hy) pixels, > 0

    def __post_init__(self):
        if self.half[0] <= 0 or self.half[1] <= 0:
            raise ValidationError(f"kernel half-size must be positive, got {self.half}")


@dataclass
class BinField:
    """Per-pixel histogram bin indices for one frame, shared by all kernels."""

    index: np.ndarray  # int32 (h, w)
    valid: np.ndarray  # uint8 (h, w), 0 where the pixel has no code
    nbins: int
    layout: str

    @property
    def shape(self):
        return self.index.shape


def clip_window(window, width, height):
    """Integer pixel bounds [x0, x1) x [y0, y1) covered by the window."""
    cx, cy = window.center
    hx, hy = window.half
    x0 = max(0, int(math.ceil(cx - hx)))
    x1 = min(width - 1, int(math.floor(cx + hx)))
    y0 = max(0, int(math.ceil(cy - hy)))
    y1 = min(height - 1, int(math.floor(cy + hy)))
    if x0 > x1 or y0 > y1:
        raise ZeroSupportError(
            f"kernel window at {window.center} with half-size {window.half} "
            f"has no pixels inside a {width}x{height} frame"
        )
    return x0, x1 + 1, y0, y1 + 1


def color_bin_field(hsv):
    """Joint 15x8x8 HSV bin index per pixel."""
    hb = np.minimum((hsv.hue * (COLOR_BINS[0] / 360.0)).astype(np.int32), COLOR_BINS[0] - 1)
    sb = np.minimum((hsv.sat * COLOR_BINS[1]).astype(np.int32), COLOR_BINS[1] - 1)
    vb = np.minimum((hsv.val * COLOR_BINS[2]).astype(np.int32), COLOR_BINS[2] - 1)
    index = (hb * COLOR_BINS[1] + sb) * COLOR_BINS[2] + vb
    valid = np.ones(index.shape, dtype=np.uint8)
    return BinField(index=index.astype(np.int32), valid=valid, nbins=960, layout=COLOR_LAYOUT)


def lbp_bin_field(gray):
    """RIU-LBP code per pixel; the 1-pixel border carries no code."""
    codes = kernels.lbp_code_map(np.ascontiguousarray(gray, dtype=np.float64))
    valid = (codes != kernels.LBP_INVALID).astype(np.uint8)
    index = np.where(valid, codes, 0).astype(np.int32)
    return BinField(index=index, valid=valid, nbins=LBP_BINS, layout=LBP_LAYOUT)


def extract_histogram(field, window):
    """Epanechnikov-weighted, normalized histogram of the field in the window."""
    h, w = field.shape
    x0, x1, y0, y1 = clip_window(window, w, h)
    cx, cy = window.center
    hx, hy = window.half
    bins, total = kernels.weighted_histogram(
        field.index, field.valid, field.nbins, x0, x1, y0, y1,
        float(cx), float(cy), float(hx), float(hy),
    )
    if total <= 0.0:
        raise ZeroSupportError(
            f"kernel window at {window.center} has zero total weight"
        )
    return Histogram(bins=bins / total, layout=field.layout)


def color_histogram(hsv, window):
    return extract_histogram(color_bin_field(hsv), window)


def lbp_histogram(gray, window):
    return extract_histogram(lbp_bin_field(gray), window)


def lbp_code(patch):
    """RIU-LBP(8,1) code of a 3x3 gray patch around its center pixel."""
    patch = np.asarray(patch, dtype=np.float64)
    if patch.shape != (3, 3):
        raise ValidationError(f"lbp_code expects a 3x3 patch, got {patch.shape}")
    center = patch[1, 1]
    bits = [
        1 if patch[1 + dy, 1 + dx] >= center else 0
        for dx, dy in kernels.numpy_impl.LBP_RING
    ]
    trans = sum(bits[p] != bits[(p + 1) % 8] for p in range(8))
    return sum(bits) if trans <= 2 else 9


@dataclass
class HogMap:
    cells: np.ndarray  # (rows, cols, 9)
    cell_size: int

    @property
    def rows(self):
        return self.cells.shape[0]

    @property
    def cols(self):
        return self.cells.shape[1]


def hog_cells(gradients, cell_size=DEFAULT_CELL_SIZE):
    """9-bin unsigned HOG cells, block-energy normalized and truncated at 0.2."""
    h, w = gradients.magnitude.shape
    if h < cell_size or w < cell_size:
        raise ValidationError(
            f"frame {w}x{h} smaller than one {cell_size}px cell"
        )
    raw = kernels.hog_accumulate(
        np.ascontiguousarray(gradients.magnitude, dtype=np.float64),
        np.ascontiguousarray(gradients.orientation, dtype=np.float64),
        cell_size,
        HOG_BINS,
    )
    energy = (raw * raw).sum(axis=2)
    padded = np.pad(energy, 1)
    # 2x2 block energies, one block per top-left corner on the padded grid
    blocks = padded[:-1, :-1] + padded[1:, :-1] + padded[:-1, 1:] + padded[1:, 1:]
    # each cell belongs to four blocks; sum their energies
    total = blocks[:-1, :-1] + blocks[1:, :-1] + blocks[:-1, 1:] + blocks[1:, 1:]
    denom = np.sqrt(total) + HOG_EPS
    cells = np.minimum(raw / denom[:, :, None], HOG_TRUNCATION)
    return HogMap(cells=cells, cell_size=cell_size)


class FeaturePyramid:
    """HOG maps at scales 2^(-l/lambda); levels are built lazily and cached.

    Level 0 is native resolution. Construction stops at the last level whose
    resampled image still holds one full cell, or at max_levels.
    """

    def __init__(self, gray, lam=DEFAULT_LAMBDA, cell_size=DEFAULT_CELL_SIZE, max_levels=40):
        self.gray = np.ascontiguousarray(gray, dtype=np.float64)
        self.lam = lam
        self.cell_size = cell_size
        h, w = self.gray.shape
        if min(h, w) < cell_size:
            raise ValidationError(f"frame {w}x{h} smaller than one cell")
        last = 0
        for level in range(max_levels):
            s = self.scale(level)
            if min(h * s, w * s) < cell_size:
                break
            last = level
        self.max_level = last
        self._cache = {}

    def scale(self, level):
        return 2.0 ** (-level / self.lam)

    @property
    def num_levels(self):
        return self.max_level + 1

    def level(self, level):
        if level < 0 or level > self.max_level:
            raise ValidationError(
                f"pyramid level {level} out of range [0, {self.max_level}]"
            )
        cached = self._cache.get(level)
        if cached is None:
            plane = resample_plane(self.gray, self.scale(level))
            cached = hog_cells(compute_gradients(plane), self.cell_size)
            self._cache[level] = cached
        return cached

    @property
    def levels(self):
        return [self.level(l) for l in range(self.num_levels)]


def build_feature_pyramid(gray, lam=DEFAULT_LAMBDA, cell_size=DEFAULT_CELL_SIZE, max_levels=40):
    """Materialize the full pyramid for a gray plane."""
    pyramid = FeaturePyramid(gray, lam=lam, cell_size=cell_size, max_levels=max_levels)
    pyramid.levels  # build everything up front
    return pyramid


def level_for_object(w0, h0, c0, r0, cell_size=DEFAULT_CELL_SIZE,
                     lam=DEFAULT_LAMBDA, max_level=None):
    """Pyramid level where a (w0, h0) px object matches a c0 x r0 cell filter.

    Returns (level, clamped); clamped is True when the raw level fell outside
    [0, max_level] and was pulled back in.
    """
    if w0 <= 0 or h0 <= 0 or c0 <= 0 or r0 <= 0:
        raise ValidationError("object size and filter dims must be positive")
    ratio = min(w0 / (cell_size * c0), h0 / (cell_size * r0))
    raw = math.floor(lam * math.log2(ratio))
    level = max(0, raw)
    if max_level is not None:
        level = min(level, max_level)
    return level, level != raw


def part_level(root_level, lam=DEFAULT_LAMBDA):
    """Parts sample at twice the root resolution, clamped at level 0."""
    return max(root_level - lam, 0)


def hog_window(hogmap, x, y, rows, cols):
    """Row-major cell window read with zero padding outside the map."""
    out = np.zeros((rows, cols, HOG_BINS), dtype=np.float64)
    r, c = hogmap.rows, hogmap.cols
    y0, y1 = max(0, y), min(r, y + rows)
    x0, x1 = max(0, x), min(c, x + cols)
    if y0 < y1 and x0 < x1:
        out[y0 - y : y1 - y, x0 - x : x1 - x] = hogmap.cells[y0:y1, x0:x1]
    return out.reshape(-1)


def hog_at(pyramid, p, rows, cols):
    """Feature vector at pyramid position p = (x, y, level)."""
    x, y, level = p
    return hog_window(pyramid.level(level), int(x), int(y), rows, cols)
