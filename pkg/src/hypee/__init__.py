"""Hyperbolic early-exit networks on the Lorentz hyperboloid."""

from .classifier import LorentzMLR, hyperplane_normals, mlr_logits, predict
from .config import RunConfig, config_from_dict, load_config
from .costs import CostModel, macs_at_exit, macs_saved_fraction, mixture_macs_saved
from .entailment import ConeConfig, cone_membership, entailment_loss_pair, exterior_angle, half_aperture
from .errors import ContractError, DataError, HypeeError, ManifoldError, NumericalError, TangentOverflowError
from .geometry import (
    exp_map_origin,
    geodesic_distance,
    lift,
    log_map_origin,
    lorentz_inner,
    origin,
    scale_then_lift,
    spatial_norm,
)
from .model import BackboneConfig, LossConfig, MultiExitModel, build_model, forward_with_exits, total_loss
from .training import OptimizerConfig, evaluate, grad_check, model_grad_check, train
from .trigger import NormStats, calibrate, decide, entropy_decide, evaluate_trigger

__version__ = "0.1.0"
