"""Run configuration: namespaced tunables with spec defaults.

Configs load from a JSON document whose top-level keys are the section
names. Unknown sections or keys are rejected; missing ones take defaults.
The fully-resolved config is echoed into every run's output directory.
"""

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ValidationError
from .meanshift import SimilarityMetric


@dataclass
class FeaturesConfig:
    cell_size: int = 8
    levels_per_octave: int = 10
    max_levels: int = 40


@dataclass
class MeanshiftConfig:
    metric: str = "kl"
    epsilon: float = 1e-6
    weight_clamp: float = 100.0
    move_eps: float = 0.5
    delta_frac: float = 0.05
    baseline_iterations: int = 20


@dataclass
class DpmConfig:
    template_parts: int = 4
    template_part_cells: int = 3
    detect_stride: int = 2
    detect_threshold: float = 0.0
    detect_part_radius: int = 2
    nms_iou: float = 0.5


@dataclass
class DmkConfig:
    t_color: int = 5
    t_texture: int = 5
    t_hog: int = 3
    alpha: float = 0.5
    beta: float = 10000.0
    ds_clamp: float = 0.1
    reinit_score: float = 0.2
    reinit_streak: int = 3
    reinit_iou: float = 0.3
    hog_search_radius: int = 2
    part_scale_mode: str = "literal"
    kalman_q: float = 1.0
    kalman_r: float = 4.0


@dataclass
class MultitrackConfig:
    detect_interval: int = 5
    birth_iou: float = 0.5
    birth_threshold: float = 0.5
    miss_limit: int = 10


@dataclass
class RunConfig:
    features: FeaturesConfig = field(default_factory=FeaturesConfig)
    meanshift: MeanshiftConfig = field(default_factory=MeanshiftConfig)
    dpm: DpmConfig = field(default_factory=DpmConfig)
    dmk: DmkConfig = field(default_factory=DmkConfig)
    multitrack: MultitrackConfig = field(default_factory=MultitrackConfig)

    def validate(self):
        for name in ("t_color", "t_texture", "t_hog"):
            if getattr(self.dmk, name) < 1:
                raise ValidationError(f"dmk.{name} must be >= 1")
        if not 0.0 <= self.dmk.alpha <= 1.0:
            raise ValidationError("dmk.alpha must lie in [0, 1]")
        if self.dmk.part_scale_mode not in ("literal", "half"):
            raise ValidationError("dmk.part_scale_mode must be 'literal' or 'half'")
        if self.meanshift.metric not in ("kl", "bhattacharyya"):
            raise ValidationError("meanshift.metric must be 'kl' or 'bhattacharyya'")
        return self

    def metric(self):
        return SimilarityMetric(
            kind=self.meanshift.metric,
            epsilon=self.meanshift.epsilon,
            weight_clamp=self.meanshift.weight_clamp,
        )

    def to_dict(self):
        return dataclasses.asdict(self)


def config_from_dict(doc):
    cfg = RunConfig()
    sections = {f.name: f for f in dataclasses.fields(RunConfig)}
    for section, values in doc.items():
        if section not in sections:
            raise ValidationError(f"unknown config section {section!r}")
        target = getattr(cfg, section)
        known = {f.name: f.type for f in dataclasses.fields(target)}
        for key, value in values.items():
            if key not in known:
                raise ValidationError(f"unknown config key {section}.{key}")
            setattr(target, key, value)
    return cfg.validate()


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"cannot parse config {path!r}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"config {path!r} must be a JSON object")
    return config_from_dict(doc)


def apply_overrides(cfg, overrides):
    """Apply section.key=value strings on top of a config."""
    for item in overrides:
        if "=" not in item:
            raise ValidationError(f"override {item!r} must look like section.key=value")
        path, raw = item.split("=", 1)
        if "." not in path:
            raise ValidationError(f"override key {path!r} must be section.key")
        section, key = path.split(".", 1)
        if not hasattr(cfg, section):
            raise ValidationError(f"unknown config section {section!r}")
        target = getattr(cfg, section)
        if not hasattr(target, key):
            raise ValidationError(f"unknown config key {section}.{key}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        setattr(target, key, value)
    return cfg.validate()


def save_config(cfg, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
