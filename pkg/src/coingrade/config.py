"""Pipeline configuration: one YAML file, one section per stage.

Unknown keys are rejected.  Every default matches the published pipeline
constants, so an empty file reproduces the reference setup.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .ann import TrainConfig
from .errors import ConfigError
from .features import BrightnessParams
from .imaging import PreprocessConfig
from .metrics import SplitPlan
from .resample import AugmentConfig, SmoteConfig
from .svm import SvmConfig


@dataclass(frozen=True)
class ClusterConfig:
    k: int = 5
    n_init: int = 10
    max_iter: int = 300


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    jobs: int = 1
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    brightness: BrightnessParams = field(default_factory=BrightnessParams)
    clusters: ClusterConfig = field(default_factory=ClusterConfig)
    smote: SmoteConfig = field(default_factory=SmoteConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)
    split: SplitPlan = field(default_factory=SplitPlan)

    def with_seed(self, seed: int) -> "PipelineConfig":
        """Propagate one global seed into every seeded stage."""
        return dataclasses.replace(
            self, seed=seed,
            smote=dataclasses.replace(self.smote, seed=seed),
            augment=dataclasses.replace(self.augment, seed=seed),
            train=dataclasses.replace(self.train, seed=seed),
            split=dataclasses.replace(self.split, seed=seed))

    def to_dict(self) -> dict:
        def conv(v):
            if isinstance(v, tuple):
                return [conv(x) for x in v]
            return v
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if dataclasses.is_dataclass(v):
                out[f.name] = {k: conv(x) for k, x in dataclasses.asdict(v).items()}
            else:
                out[f.name] = v
        return out


def _build(cls, data, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for k, v in data.items():
        if isinstance(v, list):
            v = tuple(v)
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


SECTIONS = {"preprocess": PreprocessConfig, "brightness": BrightnessParams, "clusters": ClusterConfig,
            "smote": SmoteConfig, "augment": AugmentConfig, "train": TrainConfig, "svm": SvmConfig,
            "split": SplitPlan}


def from_dict(data: dict | None) -> PipelineConfig:
    data = dict(data or {})
    unknown = sorted(set(data) - set(SECTIONS) - {"seed", "jobs"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {', '.join(unknown)}")
    kwargs = {name: _build(cls, data.get(name), name) for name, cls in SECTIONS.items()}
    seed = data.get("seed", 0)
    jobs = data.get("jobs", 1)
    if not isinstance(seed, int) or not isinstance(jobs, int) or jobs < 1:
        raise ConfigError("seed must be an integer and jobs a positive integer")
    cfg = PipelineConfig(jobs=jobs, **kwargs)
    # seeds written explicitly in a section win over the global one
    cfg = cfg.with_seed(seed)
    for name in ("smote", "augment", "train", "split"):
        section = data.get(name) or {}
        if "seed" in section:
            cfg = dataclasses.replace(cfg, **{name: dataclasses.replace(getattr(cfg, name),
                                                                        seed=section["seed"])})
    return cfg


def load_config(path=None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return from_dict(data)


def dump_config(cfg: PipelineConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
