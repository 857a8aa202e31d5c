"""Run configuration: every parameter block with its default, loadable from JSON."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

from .anchors import AUGMENT_MODES
from .evaluation import EvalConfig
from .fusion import FusionParams
from .offline import PathParams, TrimParams
from .online import OnlineParams
from .simulate import NoiseModel, ScenarioConfig

CONFIG_ENV = "ACTIONTUBES_CONFIG"


@dataclass
class HorizonConfig:
    """Video-independent part of the future-completion settings."""

    velocity_window: int = 5

    def __post_init__(self):
        if self.velocity_window < 1:
            raise ValueError("velocity_window must be >= 1")


@dataclass
class TransitionConfig:
    theta: float = 0.10
    augment: Optional[str] = None

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must be in [0, 1]")
        if self.augment is not None and self.augment not in AUGMENT_MODES:
            raise ValueError(f"unknown augmentation {self.augment!r}")


@dataclass
class RunConfig:
    fusion: FusionParams = field(default_factory=FusionParams)
    paths: PathParams = field(default_factory=PathParams)
    trim: TrimParams = field(default_factory=TrimParams)
    online: OnlineParams = field(default_factory=OnlineParams)
    horizon: HorizonConfig = field(default_factory=HorizonConfig)
    transitions: TransitionConfig = field(default_factory=TransitionConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    noise: NoiseModel = field(default_factory=NoiseModel)

    def to_dict(self) -> dict:
        return asdict(self)


def _alpha(value):
    # JSON object keys are strings; per-class alphas are keyed by class id
    if isinstance(value, dict):
        return {int(k): float(v) for k, v in value.items()}
    return value


def _block(cls, values: dict, name: str):
    if not isinstance(values, dict):
        raise ValueError(f"config block {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ValueError(f"unknown keys in {name!r}: {unknown}")
    values = dict(values)
    if "alpha" in values:
        values["alpha"] = _alpha(values["alpha"])
    return cls(**values)


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ValueError("config must be a JSON object")
    blocks = {f.name: f for f in fields(RunConfig)}
    unknown = sorted(set(data) - set(blocks))
    if unknown:
        raise ValueError(f"unknown config blocks: {unknown}")
    kwargs = {}
    for name, values in data.items():
        kwargs[name] = _block(blocks[name].default_factory, values, name)
    return RunConfig(**kwargs)


def load_config(path: Optional[str] = None) -> RunConfig:
    """Load ``path``, else the file named by $ACTIONTUBES_CONFIG, else defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return RunConfig()
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))
