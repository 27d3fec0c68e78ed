"""Joint multi-exit training and finite-difference gradient checking."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import torch

from .classifier import predict
from .entailment import ConeConfig, exterior_angle, half_aperture
from .errors import ContractError, NumericalError
from .geometry import geodesic_distance
from .model import LossConfig, MultiExitModel, entailment_violation, loss_terms

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    name: str = "adam"
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0
    batch_size: int = 64
    step_size: int = 20  # epochs between learning-rate decays
    gamma: float = 0.5

    def __post_init__(self):
        if self.name not in ("adam", "sgd"):
            raise ContractError(f"unknown optimizer {self.name!r}")
        if not self.lr > 0 or self.batch_size < 1 or self.step_size < 1 or not 0 < self.gamma <= 1:
            raise ContractError("invalid optimizer settings")


def make_optimizer(params, cfg: OptimizerConfig):
    if cfg.name == "adam":
        return torch.optim.Adam(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    return torch.optim.SGD(params, lr=cfg.lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay)


@dataclass
class TrainResult:
    model: MultiExitModel
    metrics: List[dict] = field(default_factory=list)


@torch.no_grad()
def evaluate(model: MultiExitModel, X, y, cone: Optional[ConeConfig] = None) -> dict:
    """Per-exit accuracy and mean embedding norm, plus the entailment violation in hyperbolic mode."""
    X = torch.as_tensor(X, dtype=torch.float64)
    y = torch.as_tensor(y, dtype=torch.long)
    out = model(X)
    acc = [float((predict(l) == y).double().mean()) for l in out.logits]
    norms = [float(n.mean()) for n in out.norms()]
    res = {"exit_accuracy": acc, "mean_norm": norms}
    if out.mode == "hyperbolic":
        res["entailment_violation"] = entailment_violation(out, cone or ConeConfig(c=model.config.curvature))
    return res


def train(
    model: MultiExitModel,
    X,
    y,
    opt_cfg: OptimizerConfig = OptimizerConfig(),
    loss_cfg: LossConfig = LossConfig(),
    cone: Optional[ConeConfig] = None,
    epochs: int = 30,
    seed: int = 0,
    on_epoch: Optional[Callable[[dict], None]] = None,
) -> TrainResult:
    """Minimize the weighted multi-exit objective with minibatches.

    Shuffling and exit sampling draw from a generator seeded with ``seed``, so a
    run is bitwise reproducible for a fixed model initialization. Each epoch
    record carries the mean training loss and the per-exit accuracy and mean
    norm measured on the training set after the epoch.
    """
    X = torch.as_tensor(X, dtype=torch.float64)
    y = torch.as_tensor(y, dtype=torch.long)
    if len(X) == 0:
        raise ContractError("training set is empty")
    if len(X) != len(y):
        raise ContractError("features and labels differ in length")
    cone = cone or ConeConfig(c=model.config.curvature)
    result = TrainResult(model)
    if epochs <= 0:
        return result

    gen = torch.Generator().manual_seed(seed)
    opt = make_optimizer(model.parameters(), opt_cfg)
    sched = torch.optim.lr_scheduler.StepLR(opt, step_size=opt_cfg.step_size, gamma=opt_cfg.gamma)
    N = model.config.num_exits
    weights = torch.tensor(loss_cfg.weights(N), dtype=torch.float64)

    for epoch in range(epochs):
        model.train()
        perm = torch.randperm(len(X), generator=gen)
        total, seen = 0.0, 0
        for step, start in enumerate(range(0, len(X), opt_cfg.batch_size)):
            idx = perm[start : start + opt_cfg.batch_size]
            active = None
            if loss_cfg.exit_sampling:
                active = [int(torch.multinomial(weights, 1, generator=gen))]
            try:
                out = model(X[idx])
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch} step {step}: {exc}") from exc
            loss = loss_terms(out, y[idx], loss_cfg, cone, active)["total"]
            if not torch.isfinite(loss):
                raise NumericalError(f"non-finite loss at epoch {epoch} step {step}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            if not all(bool(torch.isfinite(p).all()) for p in model.parameters()):
                raise NumericalError(f"parameters became non-finite at epoch {epoch} step {step}")
            model.project_heads_()
            total += loss.item() * len(idx)
            seen += len(idx)
        sched.step()
        model.eval()
        record = {"epoch": epoch, "loss": total / seen, "lr": opt.param_groups[0]["lr"]}
        record.update(evaluate(model, X, y, cone))
        result.metrics.append(record)
        log.debug("epoch %d loss %.5f", epoch, record["loss"])
        if on_epoch is not None:
            on_epoch(record)
    return result


@dataclass
class GradCheckReport:
    max_rel_error: Dict[str, float] = field(default_factory=dict)
    failures: List[str] = field(default_factory=list)
    skipped: bool = False
    note: str = ""

    @property
    def ok(self) -> bool:
        return not self.failures and not self.skipped

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)


def grad_check(
    loss_fn: Callable[[], torch.Tensor],
    params: Dict[str, torch.Tensor],
    tolerance: float = 1e-4,
    step: float = 1e-5,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare autograd against central differences for every scalar parameter.

    The relative error of each entry is ``|g - fd| / max(|g|, |fd|, floor)``;
    ``floor`` keeps gradients that are zero up to rounding from dividing by
    rounding noise.
    """
    for p in params.values():
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = {k: p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p) for k, p in params.items()}
    report = GradCheckReport()
    with torch.no_grad():
        for name, p in params.items():
            flat = p.view(-1)
            g = analytic[name].view(-1)
            worst = 0.0
            for j in range(flat.numel()):
                orig = float(flat[j])
                flat[j] = orig + step
                up = float(loss_fn())
                flat[j] = orig - step
                down = float(loss_fn())
                flat[j] = orig
                fd = (up - down) / (2 * step)
                a = float(g[j])
                worst = max(worst, abs(a - fd) / max(abs(a), abs(fd), floor))
            report.max_rel_error[name] = worst
            if worst > tolerance:
                report.failures.append(name)
    return report


def _boundary_margins(model: MultiExitModel, X, cone: ConeConfig) -> float:
    """Smallest distance of any hinge or clamp argument from its kink.

    Near-coincident parent/child pairs count too: the exterior angle is
    undefined at coincidence and ill-conditioned next to it.
    """
    with torch.no_grad():
        out = model(X)
        margins = [math.inf]
        sc = math.sqrt(cone.c)
        for i in range(out.num_exits - 1):
            parent, child = out.embeddings[i], out.embeddings[i + 1]
            ext = exterior_angle(parent, child, cone.c)
            aper = half_aperture(parent, cone)
            margins.append(float((ext - aper).abs().min()))
            asin_arg = 2 * cone.K / (sc * parent[..., 1:].norm(dim=-1))
            margins.append(float((asin_arg - 1).abs().min()))
            margins.append(float(ext.min()))
            margins.append(float((math.pi - ext).min()))
            margins.append(float(geodesic_distance(parent, child, cone.c, check=False).min()))
        return min(margins)


def model_grad_check(
    model: MultiExitModel,
    X,
    y,
    loss_cfg: LossConfig = LossConfig(),
    cone: Optional[ConeConfig] = None,
    tolerance: float = 1e-4,
    boundary: float = 1e-3,
) -> GradCheckReport:
    """Gradient check of the full objective over every named parameter group of ``model``.

    If a hinge or clamp sits within ``boundary`` of its kink the finite
    differences would straddle a nondifferentiable point, so the check is
    skipped and flagged instead.
    """
    X = torch.as_tensor(X, dtype=torch.float64)
    cone = cone or ConeConfig(c=model.config.curvature)
    if model.config.mode == "hyperbolic" and loss_cfg.lam > 0:
        margin = _boundary_margins(model, X, cone)
        if margin < boundary:
            return GradCheckReport(skipped=True, note="nondifferentiable point skipped")
    params = dict(model.named_parameters())
    return grad_check(lambda: loss_terms(model(X), y, loss_cfg, cone)["total"], params, tolerance)

