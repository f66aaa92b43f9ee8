"""Declarative pipeline configuration (JSON).

A config file is a JSON object whose sections mirror :class:`PipelineConfig`.
Missing keys take their defaults, unknown keys are rejected. Relative paths are
resolved against the directory holding the config file. Example::

    {
      "seed": 0,
      "output_dir": "run1",
      "input": {"synth": {"vehicles_per_lane": 60}, "fps": 30.0},
      "features": {"ttc_encoding": "inverse"},
      "labels": {"accel_floor": 2.0},
      "split": {"normal_ratio": 1.056},
      "helm": {"gamma": 1.0},
      "report": {"svg": true}
    }

Seeds: ``seed`` is the master seed. Stage seeds left as ``null`` are derived
from it with :func:`stage_seed`, and each (model, setting) run gets
:func:`~ssmhelm.evaluation.experiment.derive_seed`.
"""

import json
import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import InvalidSpec
from .evaluation.experiment import MODELS, REFERENCE_TEST_RATIO, SETTING_NAMES, BaselineHyper
from .evaluation.synth import SynthSpec
from .features import DEFAULT_CAP, DEFAULT_RADIUS, DEFAULT_WINDOW, SETTINGS, TTC_ENCODINGS
from .helm import HelmHyper
from .ingest import DEFAULT_FPS


def stage_seed(master, stage):
    """Seed for a named pipeline stage, fixed by the master seed and the stage name."""
    ss = np.random.SeedSequence(int(master), spawn_key=(zlib.crc32(stage.encode()),))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass
class InputConfig:
    csv: str = None
    schema: str = None
    synth: object = None       # dict of SynthSpec fields, or a path to a JSON file
    synth_seed: int = None
    fps: float = DEFAULT_FPS


@dataclass
class FeatureConfig:
    radius: float = DEFAULT_RADIUS
    cap: float = DEFAULT_CAP
    window: int = DEFAULT_WINDOW
    subtract_half_lengths: bool = False
    ttc_encoding: str = "clamp"
    export_csv: bool = False


@dataclass
class LabelConfig:
    fraction: float = 0.16
    accel_floor: float = 0.0
    lat_threshold: float = 1.3
    severe: float = 0.5
    weak: float = 1.0
    lane_window: int = 15
    bins: list = None
    overrides: str = None


@dataclass
class SplitConfig:
    seed: int = None
    # null means round(test_ratio * abnormal rows)
    normal_test_count: int = None
    test_ratio: float = REFERENCE_TEST_RATIO
    valid_fraction: float = 0.2
    # null keeps every row; a number keeps all abnormal rows plus that many normals per abnormal
    normal_ratio: float = None
    sample_seed: int = None


@dataclass
class ReportConfig:
    svg: bool = False


@dataclass
class PipelineConfig:
    seed: int = 0
    output_dir: str = "ssmhelm-out"
    input: InputConfig = field(default_factory=InputConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    labels: LabelConfig = field(default_factory=LabelConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    helm: HelmHyper = field(default_factory=HelmHyper)
    baseline: BaselineHyper = field(default_factory=BaselineHyper)
    models: list = field(default_factory=lambda: list(MODELS))
    settings: list = field(default_factory=lambda: list(SETTING_NAMES))
    report: ReportConfig = field(default_factory=ReportConfig)
    base_dir: str = "."

    # derived seeds
    def synth_seed(self):
        s = self.input.synth_seed
        return stage_seed(self.seed, "synth") if s is None else int(s)

    def split_seed(self):
        s = self.split.seed
        return stage_seed(self.seed, "split") if s is None else int(s)

    def sample_seed(self):
        s = self.split.sample_seed
        return stage_seed(self.seed, "sample") if s is None else int(s)

    def path(self, p):
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def out(self):
        return self.path(self.output_dir)

    def synth_spec(self):
        s = self.input.synth
        if s is None:
            return None
        if isinstance(s, str):
            try:
                s = json.loads(self.path(s).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise InvalidSpec(f"cannot read synth spec {s}: {exc}") from exc
        return SynthSpec.from_dict(s)

    def validate(self, need_input=True):
        if self.seed is None or int(self.seed) < 0:
            raise InvalidSpec("seed must be a non-negative integer")
        inp = self.input
        if need_input and (inp.csv is None) == (inp.synth is None):
            raise InvalidSpec("set exactly one of input.csv and input.synth")
        for name in ("csv", "schema"):
            p = getattr(inp, name)
            if p is not None and not self.path(p).is_file():
                raise InvalidSpec(f"input.{name}: no such file {self.path(p)}")
        if isinstance(inp.synth, str) and not self.path(inp.synth).is_file():
            raise InvalidSpec(f"input.synth: no such file {self.path(inp.synth)}")
        if inp.synth is not None:
            self.synth_spec()
        if self.labels.overrides is not None and not self.path(self.labels.overrides).is_file():
            raise InvalidSpec(f"labels.overrides: no such file {self.path(self.labels.overrides)}")
        f, lab, sp = self.features, self.labels, self.split
        positive = {"input.fps": inp.fps, "features.radius": f.radius, "features.cap": f.cap,
                    "features.window": f.window, "labels.fraction": lab.fraction,
                    "labels.lat_threshold": lab.lat_threshold, "labels.severe": lab.severe,
                    "labels.weak": lab.weak, "labels.lane_window": lab.lane_window,
                    "split.test_ratio": sp.test_ratio}
        for name, v in positive.items():
            if not v > 0:
                raise InvalidSpec(f"{name} must be positive, got {v}")
        if lab.accel_floor < 0:
            raise InvalidSpec("labels.accel_floor must be non-negative")
        if not lab.fraction < 1:
            raise InvalidSpec("labels.fraction must be below 1")
        if lab.severe > lab.weak:
            raise InvalidSpec("labels.severe must not exceed labels.weak")
        if f.ttc_encoding not in TTC_ENCODINGS:
            raise InvalidSpec(f"features.ttc_encoding must be one of {TTC_ENCODINGS}")
        if not 0 < sp.valid_fraction < 1:
            raise InvalidSpec("split.valid_fraction must lie in (0, 1)")
        if sp.normal_test_count is not None and int(sp.normal_test_count) < 1:
            raise InvalidSpec("split.normal_test_count must be positive")
        if sp.normal_ratio is not None and not sp.normal_ratio > 0:
            raise InvalidSpec("split.normal_ratio must be positive")
        try:
            self.helm.validate()
        except ValueError as exc:
            raise InvalidSpec(f"helm: {exc}") from exc
        b = self.baseline
        if not 0 <= b.p <= 100 or min(b.psi, b.n_trees, b.k_starts, b.m_keep) < 1:
            raise InvalidSpec("baseline: p must lie in [0, 100] and counts must be positive")
        for m in self.models:
            if m not in MODELS:
                raise InvalidSpec(f"unknown model {m!r}; choose from {MODELS}")
        for s in self.settings:
            if s not in SETTINGS:
                raise InvalidSpec(f"unknown setting {s!r}; choose from {tuple(SETTINGS)}")
        if not self.models or not self.settings:
            raise InvalidSpec("models and settings must not be empty")
        return self

    def to_dict(self):
        d = asdict(self)
        d["helm"]["widths"] = list(self.helm.widths)
        d.pop("base_dir")
        return d


_SECTIONS = {"input": InputConfig, "features": FeatureConfig, "labels": LabelConfig,
             "split": SplitConfig, "helm": HelmHyper, "baseline": BaselineHyper,
             "report": ReportConfig}


def _build(cls, obj, where):
    if not isinstance(obj, dict):
        raise InvalidSpec(f"{where} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(obj) - known
    if unknown:
        raise InvalidSpec(f"unknown keys in {where}: {sorted(unknown)}")
    return cls(**obj)


def config_from_dict(obj, base_dir="."):
    if not isinstance(obj, dict):
        raise InvalidSpec("config must be a JSON object")
    obj = dict(obj)
    known = {f.name for f in fields(PipelineConfig)} - {"base_dir"}
    unknown = set(obj) - known
    if unknown:
        raise InvalidSpec(f"unknown config keys: {sorted(unknown)}")
    for name, cls in _SECTIONS.items():
        if name in obj:
            obj[name] = _build(cls, obj[name], name)
    cfg = PipelineConfig(**obj, base_dir=str(base_dir))
    if "helm" in obj:
        cfg.helm = replace(cfg.helm, widths=tuple(cfg.helm.widths))
    return cfg


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(obj, assignments):
    """Apply ``section.key=value`` strings to a config dict; values are parsed as JSON."""
    obj = json.loads(json.dumps(obj))
    for item in assignments:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise InvalidSpec(f"override {item!r} is not key=value")
        parts = key.split(".")
        node = obj
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise InvalidSpec(f"override {item!r}: {p} is not a section")
        node[parts[-1]] = _parse_value(value)
    return obj


def load_config(path=None, overrides=(), need_input=True):
    """Read a JSON config (defaults when ``path`` is None), apply overrides and validate."""
    obj, base = {}, Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise InvalidSpec(f"no such config file {path}") from exc
        except json.JSONDecodeError as exc:
            raise InvalidSpec(f"{path}: invalid JSON: {exc}") from exc
        base = path.resolve().parent
    obj = apply_overrides(obj, overrides)
    try:
        return config_from_dict(obj, base).validate(need_input)
    except TypeError as exc:
        raise InvalidSpec(str(exc)) from exc
