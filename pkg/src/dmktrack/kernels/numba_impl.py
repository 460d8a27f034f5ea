"""numba @njit implementations of the per-pixel hot loops.

Signature-compatible with numpy_impl; selected by default when numba is
importable and DMKTRACK_NUMBA is not set to 0. All kernels are cached to
disk so repeated runs skip JIT compilation.
"""

import numpy as np
from numba import njit

LBP_INVALID = 10


@njit(cache=True)
def rgb_to_hsv_planes(rgb):
    h, w = rgb.shape[0], rgb.shape[1]
    hue = np.zeros((h, w), dtype=np.float64)
    sat = np.zeros((h, w), dtype=np.float64)
    val = np.zeros((h, w), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            r = rgb[i, j, 0]
            g = rgb[i, j, 1]
            b = rgb[i, j, 2]
            mx = max(r, g, b)
            mn = min(r, g, b)
            delta = mx - mn
            val[i, j] = mx / 255.0
            if mx > 0.0:
                sat[i, j] = delta / mx
            if delta > 0.0:
                if mx == r:
                    hh = (g - b) / delta
                    if hh < 0.0:
                        hh += 6.0
                elif mx == g:
                    hh = (b - r) / delta + 2.0
                else:
                    hh = (r - g) / delta + 4.0
                hv = hh * 60.0
                if hv >= 360.0:
                    hv -= 360.0
                hue[i, j] = hv
    return hue, sat, val


@njit(cache=True)
def lbp_code_map(gray):
    h, w = gray.shape
    codes = np.full((h, w), LBP_INVALID, dtype=np.uint8)
    if h < 3 or w < 3:
        return codes
    # ring order E, SE, S, SW, W, NW, N, NE
    dxs = (1, 1, 0, -1, -1, -1, 0, 1)
    dys = (0, 1, 1, 1, 0, -1, -1, -1)
    bits = np.zeros(8, dtype=np.uint8)
    for i in range(1, h - 1):
        for j in range(1, w - 1):
            c = gray[i, j]
            ones = 0
            for p in range(8):
                bit = 1 if gray[i + dys[p], j + dxs[p]] >= c else 0
                bits[p] = bit
                ones += bit
            trans = 0
            for p in range(8):
                if bits[p] != bits[(p + 1) % 8]:
                    trans += 1
            codes[i, j] = ones if trans <= 2 else 9
    return codes


@njit(cache=True)
def weighted_histogram(index, valid, nbins, x0, x1, y0, y1, cx, cy, hx, hy):
    hist = np.zeros(nbins, dtype=np.float64)
    total = 0.0
    for y in range(y0, y1):
        uy = (y - cy) / hy
        uy2 = uy * uy
        for x in range(x0, x1):
            if valid[y, x] == 0:
                continue
            ux = (x - cx) / hx
            u = ux * ux + uy2
            wgt = 1.0 - u
            if wgt > 0.0:
                hist[index[y, x]] += wgt
                total += wgt
    return hist, total


@njit(cache=True)
def meanshift_step(index, valid, wlut, x0, x1, y0, y1, cx, cy, hx, hy):
    sx = 0.0
    sy = 0.0
    wsum = 0.0
    for y in range(y0, y1):
        uy = (y - cy) / hy
        uy2 = uy * uy
        for x in range(x0, x1):
            if valid[y, x] == 0:
                continue
            ux = (x - cx) / hx
            u = ux * ux + uy2
            if u < 1.0:
                w = wlut[index[y, x]]
                sx += w * (x - cx)
                sy += w * (y - cy)
                wsum += w
    if wsum <= 0.0:
        return 0.0, 0.0, 0.0
    return sx / wsum, sy / wsum, wsum


@njit(cache=True)
def weighted_density(index, valid, wlut, x0, x1, y0, y1, cx, cy, hx, hy):
    num = 0.0
    den = 0.0
    for y in range(y0, y1):
        uy = (y - cy) / hy
        uy2 = uy * uy
        for x in range(x0, x1):
            if valid[y, x] == 0:
                continue
            ux = (x - cx) / hx
            u = ux * ux + uy2
            k = 1.0 - u
            if k > 0.0:
                num += wlut[index[y, x]] * k
                den += k
    return num, den


@njit(cache=True)
def bilinear_resample(src, oh, ow):
    h, w = src.shape
    out = np.empty((oh, ow), dtype=np.float64)
    xscale = w / ow
    yscale = h / oh
    for i in range(oh):
        sy = (i + 0.5) * yscale - 0.5
        if sy < 0.0:
            sy = 0.0
        if sy > h - 1.0:
            sy = h - 1.0
        y0 = int(np.floor(sy))
        y1 = min(y0 + 1, h - 1)
        fy = sy - y0
        for j in range(ow):
            sx = (j + 0.5) * xscale - 0.5
            if sx < 0.0:
                sx = 0.0
            if sx > w - 1.0:
                sx = w - 1.0
            x0 = int(np.floor(sx))
            x1 = min(x0 + 1, w - 1)
            fx = sx - x0
            top = src[y0, x0] * (1.0 - fx) + src[y0, x1] * fx
            bot = src[y1, x0] * (1.0 - fx) + src[y1, x1] * fx
            out[i, j] = top * (1.0 - fy) + bot * fy
    return out


@njit(cache=True)
def hog_accumulate(mag, ori, cell, nbins):
    h, w = mag.shape
    rows = h // cell
    cols = w // cell
    out = np.zeros((rows, cols, nbins), dtype=np.float64)
    if rows == 0 or cols == 0:
        return out
    binw = np.pi / nbins
    for y in range(rows * cell):
        ci = y // cell
        for x in range(cols * cell):
            cj = x // cell
            m = mag[y, x]
            b = ori[y, x] / binw
            b0f = np.floor(b)
            f = b - b0f
            b0 = int(b0f) % nbins
            b1 = (b0 + 1) % nbins
            out[ci, cj, b0] += m * (1.0 - f)
            out[ci, cj, b1] += m * f
    return out


@njit(cache=True)
def correlate_cells(cells, filt):
    rr, cc, nb = cells.shape
    fr, fc, _ = filt.shape
    if fr > rr or fc > cc:
        return np.zeros((0, 0), dtype=np.float64)
    out = np.zeros((rr - fr + 1, cc - fc + 1), dtype=np.float64)
    for i in range(rr - fr + 1):
        for j in range(cc - fc + 1):
            acc = 0.0
            for a in range(fr):
                for b in range(fc):
                    for k in range(nb):
                        acc += cells[i + a, j + b, k] * filt[a, b, k]
            out[i, j] = acc
    return out
