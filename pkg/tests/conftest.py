import numpy as np
import pytest

from dmktrack.config import RunConfig
from dmktrack.imaging import Frame
from dmktrack.runner import run_synth
from dmktrack.synth import scenario_library


@pytest.fixture(scope="session")
def scene_dirs(tmp_path_factory):
    """Render library scenarios on demand; cache per session."""
    root = tmp_path_factory.mktemp("scenes")
    rendered = {}

    def get(name):
        if name not in rendered:
            spec = scenario_library()[name]
            out = root / name
            run_synth(spec, str(out))
            rendered[name] = out
        return rendered[name]

    return get


@pytest.fixture()
def default_config():
    return RunConfig()


def make_color_frame(width=32, height=32, rgb=(0, 0, 0)):
    buf = np.zeros((height, width, 3), dtype=np.uint8)
    buf[:, :] = rgb
    return Frame(rgb=buf)


def read_truth(path):
    """truth.csv -> {id: {frame: (cx, cy, w, h, visible)}}"""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            parts = line.strip().split(",")
            frame, tid = int(parts[0]), int(parts[1])
            out.setdefault(tid, {})[frame] = tuple(float(v) for v in parts[2:])
    return out
