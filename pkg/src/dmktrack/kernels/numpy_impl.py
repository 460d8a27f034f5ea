"""Vectorized numpy implementations of the per-pixel hot loops.

This is the fallback backend (selected with DMKTRACK_NUMBA=0) and the
reference the numba backend is checked against. Both backends share the
same function signatures and must agree to float64 rounding noise.
"""

import numpy as np

LBP_INVALID = 10  # marker for border pixels with no full 8-neighborhood


def rgb_to_hsv_planes(rgb):
    """RGB in [0,255] (float64 H,W,3) -> hue deg [0,360), sat [0,1], val [0,1]."""
    r = rgb[:, :, 0]
    g = rgb[:, :, 1]
    b = rgb[:, :, 2]
    mx = np.maximum(np.maximum(r, g), b)
    mn = np.minimum(np.minimum(r, g), b)
    delta = mx - mn
    val = mx / 255.0
    sat = np.where(mx > 0.0, delta / np.where(mx > 0.0, mx, 1.0), 0.0)

    safe = np.where(delta > 0.0, delta, 1.0)
    hr = (g - b) / safe
    hr = np.where(hr < 0.0, hr + 6.0, hr)
    hg = (b - r) / safe + 2.0
    hb = (r - g) / safe + 4.0
    # channel priority r, g, b on ties matches the loop backend
    hue = np.select([mx == r, mx == g], [hr, hg], default=hb) * 60.0
    hue = np.where(delta > 0.0, hue, 0.0)
    hue = np.where(hue >= 360.0, hue - 360.0, hue)
    return hue, sat, val


# ring order E, SE, S, SW, W, NW, N, NE (45 degree steps)
LBP_RING = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))


def lbp_code_map(gray):
    """Rotation-invariant uniform LBP(8,1) code per pixel, 10 on the border."""
    h, w = gray.shape
    codes = np.full((h, w), LBP_INVALID, dtype=np.uint8)
    if h < 3 or w < 3:
        return codes
    center = gray[1:-1, 1:-1]
    bits = np.empty((8,) + center.shape, dtype=np.uint8)
    for p, (dx, dy) in enumerate(LBP_RING):
        neigh = gray[1 + dy : h - 1 + dy, 1 + dx : w - 1 + dx]
        bits[p] = neigh >= center
    trans = np.zeros(center.shape, dtype=np.uint8)
    for p in range(8):
        trans += bits[p] != bits[(p + 1) % 8]
    ones = bits.sum(axis=0, dtype=np.uint8)
    codes[1:-1, 1:-1] = np.where(trans <= 2, ones, 9)
    return codes


def _epan_weights(x0, x1, y0, y1, cx, cy, hx, hy):
    xs = np.arange(x0, x1, dtype=np.float64)
    ys = np.arange(y0, y1, dtype=np.float64)
    ux = (xs - cx) / hx
    uy = (ys - cy) / hy
    u = ux[None, :] ** 2 + uy[:, None] ** 2
    return xs, ys, u


def weighted_histogram(index, valid, nbins, x0, x1, y0, y1, cx, cy, hx, hy):
    """Epanechnikov-weighted histogram of bin indices over [x0,x1)x[y0,y1)."""
    _, _, u = _epan_weights(x0, x1, y0, y1, cx, cy, hx, hy)
    w = np.maximum(0.0, 1.0 - u)
    w *= valid[y0:y1, x0:x1]
    idx = index[y0:y1, x0:x1]
    hist = np.bincount(idx.ravel(), weights=w.ravel(), minlength=nbins)[:nbins]
    return hist, float(w.sum())


def meanshift_step(index, valid, wlut, x0, x1, y0, y1, cx, cy, hx, hy):
    """Weighted-centroid shift over the open ellipse support u < 1.

    Returns (dx, dy, wsum); the step is undefined when wsum == 0.
    """
    xs, ys, u = _epan_weights(x0, x1, y0, y1, cx, cy, hx, hy)
    support = (u < 1.0) & (valid[y0:y1, x0:x1] != 0)
    w = wlut[index[y0:y1, x0:x1]] * support
    wsum = float(w.sum())
    if wsum <= 0.0:
        return 0.0, 0.0, 0.0
    dx = float((w * (xs[None, :] - cx)).sum()) / wsum
    dy = float((w * (ys[:, None] - cy)).sum()) / wsum
    return dx, dy, wsum


def weighted_density(index, valid, wlut, x0, x1, y0, y1, cx, cy, hx, hy):
    """Numerator and denominator of the kernel density estimate at (cx, cy)."""
    _, _, u = _epan_weights(x0, x1, y0, y1, cx, cy, hx, hy)
    k = np.maximum(0.0, 1.0 - u)
    k *= valid[y0:y1, x0:x1]
    num = float((wlut[index[y0:y1, x0:x1]] * k).sum())
    return num, float(k.sum())


def bilinear_resample(src, oh, ow):
    """Bilinear resample of a single float64 plane to (oh, ow)."""
    h, w = src.shape
    sx = (np.arange(ow, dtype=np.float64) + 0.5) * (w / ow) - 0.5
    sy = (np.arange(oh, dtype=np.float64) + 0.5) * (h / oh) - 0.5
    sx = np.clip(sx, 0.0, w - 1.0)
    sy = np.clip(sy, 0.0, h - 1.0)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = sx - x0
    fy = sy - y0
    top = src[np.ix_(y0, x0)] * (1.0 - fx) + src[np.ix_(y0, x1)] * fx
    bot = src[np.ix_(y1, x0)] * (1.0 - fx) + src[np.ix_(y1, x1)] * fx
    return top * (1.0 - fy)[:, None] + bot * fy[:, None]


def hog_accumulate(mag, ori, cell, nbins):
    """Raw orientation votes per cell with circular bilinear bin splitting."""
    h, w = mag.shape
    rows = h // cell
    cols = w // cell
    out = np.zeros((rows, cols, nbins), dtype=np.float64)
    if rows == 0 or cols == 0:
        return out
    hc = rows * cell
    wc = cols * cell
    m = mag[:hc, :wc]
    o = ori[:hc, :wc]
    # orientation bins centered at i * binw; an axis-aligned gradient
    # votes entirely into bin 0
    binw = np.pi / nbins
    b = o / binw
    b0f = np.floor(b)
    f = b - b0f
    b0 = np.mod(b0f.astype(np.int64), nbins)
    b1 = (b0 + 1) % nbins
    yi, xi = np.meshgrid(np.arange(hc), np.arange(wc), indexing="ij")
    cell_lin = (yi // cell) * cols + (xi // cell)
    base = cell_lin * nbins
    n = rows * cols * nbins
    low = np.bincount((base + b0).ravel(), weights=(m * (1.0 - f)).ravel(), minlength=n)
    high = np.bincount((base + b1).ravel(), weights=(m * f).ravel(), minlength=n)
    return (low + high).reshape(rows, cols, nbins)


def correlate_cells(cells, filt):
    """Dense filter response over every fully-contained placement."""
    rr, cc, nb = cells.shape
    fr, fc, _ = filt.shape
    if fr > rr or fc > cc:
        return np.zeros((0, 0), dtype=np.float64)
    win = np.lib.stride_tricks.sliding_window_view(cells, (fr, fc, nb))
    return np.einsum("ijkabc,abc->ij", win, filt, optimize=True)
