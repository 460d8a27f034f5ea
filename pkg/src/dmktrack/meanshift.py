"""Generic mean-shift engine over per-pixel bin fields.

With the Epanechnikov profile the shift step reduces to the weighted
centroid of the samples inside the bandwidth ellipse, which keeps every
iteration closed-form.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ValidationError, ZeroSupportError
from .features import KernelWindow, clip_window, extract_histogram

DEFAULT_MOVE_EPS = 0.5
DEFAULT_DELTA_FRAC = 0.05


@dataclass
class SampleSet:
    positions: np.ndarray  # (n, 2) pixel coordinates
    weights: np.ndarray  # (n,) nonnegative

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if len(self.positions) != len(self.weights):
            raise ValidationError("positions and weights must have equal length")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise ValidationError("weights must be finite and nonnegative")


@dataclass
class SimilarityMetric:
    kind: str = "kl"
    epsilon: float = 1e-6
    weight_clamp: float = 100.0

    def __post_init__(self):
        if self.kind not in ("kl", "bhattacharyya"):
            raise ValidationError(f"unknown similarity metric {self.kind!r}")
        if self.epsilon <= 0:
            raise ValidationError("metric epsilon must be positive")


def _bandwidth(h):
    if np.isscalar(h):
        return float(h), float(h)
    return float(h[0]), float(h[1])


def density_estimate(x, samples, h):
    """Weighted kernel density f(x; h) with the Epanechnikov profile."""
    hx, hy = _bandwidth(h)
    d = (samples.positions - np.asarray(x, dtype=np.float64)) / (hx, hy)
    k = np.maximum(0.0, 1.0 - (d * d).sum(axis=1))
    den = k.sum()
    if den <= 0.0:
        raise ZeroSupportError(f"no samples within bandwidth of {x}")
    return float((samples.weights * k).sum() / den)


def mean_shift_vector(x, samples, h):
    """Shift toward the weighted centroid of samples inside the bandwidth."""
    hx, hy = _bandwidth(h)
    x = np.asarray(x, dtype=np.float64)
    d = (samples.positions - x) / (hx, hy)
    support = (d * d).sum(axis=1) < 1.0
    w = samples.weights * support
    wsum = w.sum()
    if wsum <= 0.0:
        raise ZeroSupportError(f"empty mean-shift support at {tuple(x)}")
    centroid = (samples.positions * w[:, None]).sum(axis=0) / wsum
    return centroid - x


def histogram_similarity(p, q, metric):
    """KL distance D(q||p) (smaller is closer) or Bhattacharyya coefficient."""
    if p.layout != q.layout:
        raise ValidationError(f"histogram layouts differ: {p.layout} vs {q.layout}")
    if metric.kind == "kl":
        eps = metric.epsilon
        return float(np.sum(q.bins * np.log((q.bins + eps) / (p.bins + eps))))
    return float(np.sum(np.sqrt(p.bins * q.bins)))


def backprojection_lut(target_bins, candidate_bins, metric):
    """Per-bin back-projection weight table."""
    ratio = target_bins / (candidate_bins + metric.epsilon)
    if metric.kind == "kl":
        return np.clip(ratio, 0.0, metric.weight_clamp)
    return np.sqrt(ratio)


def backprojection_weights(pixel_bins, target, candidate, metric):
    """Weights for pixels whose histogram bins are given."""
    lut = backprojection_lut(target.bins, candidate.bins, metric)
    return lut[np.asarray(pixel_bins)]


def run_meanshift(window, target, field, metric, t_max,
                  move_eps=DEFAULT_MOVE_EPS):
    """Iterate mean-shift over a bin field until convergence or t_max.

    Returns (window at the final center, iterations used). A degenerate
    candidate histogram or an all-zero weight field stops the loop at the
    last valid position.
    """
    h, w = field.shape
    cx, cy = window.center
    hx, hy = window.half
    iterations = 0
    for _ in range(t_max):
        iterations += 1
        probe = KernelWindow((cx, cy), (hx, hy))
        try:
            candidate = extract_histogram(field, probe)
        except ZeroSupportError:
            break
        lut = backprojection_lut(target.bins, candidate.bins, metric)
        x0, x1, y0, y1 = clip_window(probe, w, h)
        dx, dy, wsum = kernels.meanshift_step(
            field.index, field.valid, lut, x0, x1, y0, y1,
            float(cx), float(cy), float(hx), float(hy),
        )
        if wsum <= 0.0:
            break
        cx = min(max(cx + dx, 0.0), w - 1.0)
        cy = min(max(cy + dy, 0.0), h - 1.0)
        if math.hypot(dx, dy) < move_eps:
            break
    return KernelWindow((cx, cy), (hx, hy)), iterations


def _density_at_scale(window, field, lut, scale):
    h, w = field.shape
    hx, hy = window.half
    probe = KernelWindow(window.center, (hx * scale, hy * scale))
    x0, x1, y0, y1 = clip_window(probe, w, h)
    cx, cy = window.center
    num, den = kernels.weighted_density(
        field.index, field.valid, lut, x0, x1, y0, y1,
        float(cx), float(cy), float(hx * scale), float(hy * scale),
    )
    if den <= 0.0:
        raise ZeroSupportError("kernel support is empty at this bandwidth")
    return num / den


def bandwidth_log_derivative(window, target, field, metric,
                             delta_frac=DEFAULT_DELTA_FRAC):
    """Central-difference estimate of (df/dh) / f at the window bandwidth.

    Back-projection weights are fixed from the candidate histogram at the
    base bandwidth; only the evaluation support is rescaled.
    """
    candidate = extract_histogram(field, window)
    lut = backprojection_lut(target.bins, candidate.bins, metric)
    f_base = _density_at_scale(window, field, lut, 1.0)
    if f_base <= 0.0:
        raise ZeroSupportError("density at base bandwidth is zero")
    f_hi = _density_at_scale(window, field, lut, 1.0 + delta_frac)
    f_lo = _density_at_scale(window, field, lut, 1.0 - delta_frac)
    h_scalar = math.sqrt(window.half[0] * window.half[1])
    return (f_hi - f_lo) / (2.0 * delta_frac * h_scalar) / f_base
