"""Backend selection for the per-pixel hot loops.

The numba backend is used when importable unless the environment variable
DMKTRACK_NUMBA is set to 0/false/off, which forces the pure-numpy path.
benchmarks/bench_kernels.py times the two backends against each other.
"""

import importlib
import os

from . import numpy_impl

LBP_INVALID = numpy_impl.LBP_INVALID


def _numba_wanted():
    flag = os.environ.get("DMKTRACK_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


numba_impl = None
if _numba_wanted():
    try:
        numba_impl = importlib.import_module(".numba_impl", __name__)
    except ImportError:
        numba_impl = None

active = numba_impl if numba_impl is not None else numpy_impl


def backend_name():
    return "numba" if active is not numpy_impl else "numpy"


rgb_to_hsv_planes = active.rgb_to_hsv_planes
lbp_code_map = active.lbp_code_map
weighted_histogram = active.weighted_histogram
meanshift_step = active.meanshift_step
weighted_density = active.weighted_density
bilinear_resample = active.bilinear_resample
hog_accumulate = active.hog_accumulate
correlate_cells = active.correlate_cells
