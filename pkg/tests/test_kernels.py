"""The numba and numpy backends must agree on every kernel."""

import numpy as np
import pytest

from dmktrack.kernels import numba_impl, numpy_impl

pytestmark = pytest.mark.skipif(numba_impl is None, reason="numba disabled")

RNG = np.random.default_rng(2024)


def random_field(h=40, w=50, nbins=16):
    index = RNG.integers(0, nbins, size=(h, w)).astype(np.int32)
    valid = (RNG.random((h, w)) > 0.1).astype(np.uint8)
    return index, valid


def test_rgb_to_hsv_planes_equivalent():
    rgb = RNG.integers(0, 256, size=(37, 23, 3)).astype(np.float64)
    # include grays and channel ties
    rgb[0, :5] = 128.0
    rgb[1, :5] = (10.0, 10.0, 200.0)
    out_a = numpy_impl.rgb_to_hsv_planes(rgb)
    out_b = numba_impl.rgb_to_hsv_planes(rgb)
    for a, b in zip(out_a, out_b):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_lbp_code_map_equivalent():
    gray = RNG.integers(0, 256, size=(31, 29)).astype(np.float64)
    np.testing.assert_array_equal(
        numpy_impl.lbp_code_map(gray), numba_impl.lbp_code_map(gray)
    )


def test_weighted_histogram_equivalent():
    index, valid = random_field()
    args = (index, valid, 16, 3, 47, 5, 38, 24.3, 19.7, 21.0, 16.5)
    ha, ta = numpy_impl.weighted_histogram(*args)
    hb, tb = numba_impl.weighted_histogram(*args)
    np.testing.assert_allclose(ha, hb, atol=1e-9)
    assert ta == pytest.approx(tb, abs=1e-9)


def test_meanshift_step_equivalent():
    index, valid = random_field()
    wlut = RNG.random(16)
    args = (index, valid, wlut, 3, 47, 5, 38, 24.3, 19.7, 21.0, 16.5)
    np.testing.assert_allclose(
        numpy_impl.meanshift_step(*args), numba_impl.meanshift_step(*args),
        atol=1e-9,
    )


def test_weighted_density_equivalent():
    index, valid = random_field()
    wlut = RNG.random(16)
    args = (index, valid, wlut, 3, 47, 5, 38, 24.3, 19.7, 21.0, 16.5)
    np.testing.assert_allclose(
        numpy_impl.weighted_density(*args), numba_impl.weighted_density(*args),
        atol=1e-9,
    )


@pytest.mark.parametrize("oh,ow", [(20, 30), (13, 17), (40, 50), (1, 1)])
def test_bilinear_resample_equivalent(oh, ow):
    src = RNG.random((40, 50))
    np.testing.assert_allclose(
        numpy_impl.bilinear_resample(src, oh, ow),
        numba_impl.bilinear_resample(src, oh, ow),
        atol=1e-12,
    )


def test_hog_accumulate_equivalent():
    mag = RNG.random((45, 62)) * 10.0
    ori = RNG.random((45, 62)) * np.pi
    np.testing.assert_allclose(
        numpy_impl.hog_accumulate(mag, ori, 8, 9),
        numba_impl.hog_accumulate(mag, ori, 8, 9),
        atol=1e-9,
    )


def test_correlate_cells_equivalent():
    cells = RNG.random((12, 15, 9))
    filt = RNG.random((4, 5, 9))
    np.testing.assert_allclose(
        numpy_impl.correlate_cells(cells, filt),
        numba_impl.correlate_cells(cells, filt),
        atol=1e-9,
    )
    small = RNG.random((3, 3, 9))
    assert numba_impl.correlate_cells(small, RNG.random((4, 5, 9))).size == 0
    assert numpy_impl.correlate_cells(small, RNG.random((4, 5, 9))).size == 0
