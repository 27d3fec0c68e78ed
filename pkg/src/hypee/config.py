"""Run configuration documents (YAML or JSON) with strict key checking."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .errors import ContractError


@dataclass
class DataConfig:
    synthetic: Optional[dict] = None  # SyntheticSpec fields
    csv: Optional[str] = None
    label_column: str = "label"
    delimiter: str = ","
    splits: list = field(default_factory=lambda: [0.6, 0.2, 0.2])  # train, calibration, test
    split_seed: int = 0
    standardize: bool = True  # fit per-feature scaling on the training split


@dataclass
class BackboneSection:
    hidden_dims: list = field(default_factory=lambda: [32, 64, 64])
    exit_after: list = field(default_factory=lambda: [0, 1, 2])
    latent_dim: int = 16
    mode: str = "hyperbolic"
    tangent_clip: Optional[float] = None


@dataclass
class LossSection:
    exit_weights: Optional[list] = None
    lam: float = 0.2
    detach_parent: bool = False
    exit_sampling: bool = False


@dataclass
class OptimizerSection:
    name: str = "adam"
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0
    batch_size: int = 64
    step_size: int = 20
    gamma: float = 0.5


@dataclass
class TriggerSection:
    sigma_floor: float = 1e-3
    min_support: int = 5
    allow_missing: bool = False
    use_confidence: bool = False
    entropy_thresholds: Optional[list] = None


@dataclass
class RunConfig:
    seed: int = 0
    curvature: float = 1.0
    cone_k: float = 0.1
    epochs: int = 40
    data: DataConfig = field(default_factory=DataConfig)
    backbone: BackboneSection = field(default_factory=BackboneSection)
    loss: LossSection = field(default_factory=LossSection)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    trigger: TriggerSection = field(default_factory=TriggerSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _build(cls, raw, where: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ContractError(f"{where or 'config'}: expected a mapping, got {type(raw).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ContractError(f"{where or 'config'}: unknown keys {unknown}")
    kwargs = {}
    for name, value in raw.items():
        ftype = fields[name].type
        sub = _SECTIONS.get(ftype if isinstance(ftype, str) else getattr(ftype, "__name__", ""))
        kwargs[name] = _build(sub, value, f"{where}.{name}".lstrip(".")) if sub else value
    return cls(**kwargs)


_SECTIONS = {
    "DataConfig": DataConfig,
    "BackboneSection": BackboneSection,
    "LossSection": LossSection,
    "OptimizerSection": OptimizerSection,
    "TriggerSection": TriggerSection,
}


def config_from_dict(raw: dict) -> RunConfig:
    cfg = _build(RunConfig, raw, "")
    if cfg.data.synthetic is None and cfg.data.csv is None:
        cfg.data.synthetic = {}
    if cfg.data.synthetic is not None and cfg.data.csv is not None:
        raise ContractError("data: give either 'synthetic' or 'csv', not both")
    if len(cfg.data.splits) != 3:
        raise ContractError("data.splits needs three fractions: train, calibration, test")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    text = path.read_text()
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ContractError(f"{path}: cannot parse config ({exc})") from exc
    return config_from_dict(raw or {})


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
