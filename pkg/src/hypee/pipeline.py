"""Glue between a RunConfig and the library: data, model construction, training."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .config import RunConfig
from .costs import CostModel
from .data import CsvSchema, Dataset, SyntheticSpec, generate_synthetic, load_csv_features, split
from .entailment import ConeConfig
from .errors import ContractError
from .model import BackboneConfig, LossConfig, MultiExitModel, build_model
from .training import OptimizerConfig, TrainResult, train
from .trigger import NormStats, calibrate


@dataclass
class Splits:
    train: Dataset
    calibration: Dataset
    test: Dataset
    num_classes: int


def synthetic_spec(cfg: RunConfig) -> SyntheticSpec:
    raw = dict(cfg.data.synthetic or {})
    raw.setdefault("seed", cfg.seed)
    try:
        return SyntheticSpec(**raw)
    except TypeError as exc:
        raise ContractError(f"data.synthetic: {exc}") from exc


def load_data(cfg: RunConfig) -> Dataset:
    if cfg.data.csv is not None:
        return load_csv_features(cfg.data.csv, CsvSchema(cfg.data.label_column, delimiter=cfg.data.delimiter))
    return generate_synthetic(synthetic_spec(cfg))


def prepare_splits(cfg: RunConfig, data: Optional[Dataset] = None) -> Splits:
    data = load_data(cfg) if data is None else data
    if len(data) == 0:
        raise ContractError("dataset is empty")
    train_set, calib, test = split(data, cfg.data.splits, cfg.data.split_seed)
    return Splits(train_set, calib, test, int(data.y.max()) + 1)


def backbone_config(cfg: RunConfig, input_dim: int, num_classes: int) -> BackboneConfig:
    b = cfg.backbone
    return BackboneConfig(
        input_dim, tuple(b.hidden_dims), tuple(b.exit_after), b.latent_dim, num_classes, b.mode, cfg.curvature, b.tangent_clip
    )


def loss_config(cfg: RunConfig) -> LossConfig:
    s = cfg.loss
    return LossConfig(None if s.exit_weights is None else tuple(s.exit_weights), s.lam, s.detach_parent, s.exit_sampling)


def optimizer_config(cfg: RunConfig) -> OptimizerConfig:
    o = cfg.optimizer
    return OptimizerConfig(o.name, o.lr, o.momentum, o.weight_decay, o.batch_size, o.step_size, o.gamma)


def cone_config(cfg: RunConfig) -> ConeConfig:
    return ConeConfig(cfg.cone_k, cfg.curvature)


def run_label(cfg: RunConfig) -> str:
    """Human label of the method a config trains."""
    if cfg.backbone.mode == "euclidean":
        return "EucEE"
    return "HypEE" if cfg.loss.lam > 0 else "HypEE (no entailment)"


def train_from_config(cfg: RunConfig, train_set: Dataset, num_classes: int, on_epoch=None) -> TrainResult:
    bb = backbone_config(cfg, train_set.X.shape[1], num_classes)
    model: MultiExitModel = build_model(bb, cfg.seed)
    if cfg.data.standardize:
        model.fit_input_scaling_(train_set.X)
    return train(
        model,
        train_set.X,
        train_set.y,
        optimizer_config(cfg),
        loss_config(cfg),
        cone_config(cfg),
        cfg.epochs,
        cfg.seed,
        on_epoch,
    )


def cost_model(model: MultiExitModel) -> CostModel:
    return CostModel.from_backbone(model.config)


def calibrate_from_config(cfg: RunConfig, model: MultiExitModel, reference: Dataset) -> NormStats:
    t = cfg.trigger
    return calibrate(model, reference.X, reference.y, sigma_floor=t.sigma_floor, min_support=t.min_support, allow_missing=t.allow_missing)
