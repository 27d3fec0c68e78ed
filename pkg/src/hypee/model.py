"""Toy multi-exit backbone and the weighted multi-exit objective.

The backbone is a stack of affine blocks with a tanh after each. Exit ``i``
reads the output of block ``exit_after[i]``, projects it to the shared latent
width ``n`` and then either

* lifts it onto the hyperboloid with a learnable per-exit scale and scores it
  with a Lorentz MLR head (``mode="hyperbolic"``), or
* unit-normalizes it and scores it with a linear head (``mode="euclidean"``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import torch
import torch.nn.functional as F
from torch import nn

from .classifier import LorentzMLR
from .entailment import ConeConfig, cone_margin, entailment_loss_pair
from .errors import ContractError
from .geometry import DEFAULT_CURVATURE, MAX_TANGENT_NORM, check_curvature, expmap0_space, spatial_norm

MODES = ("hyperbolic", "euclidean")


@dataclass(frozen=True)
class BackboneConfig:
    input_dim: int
    hidden_dims: tuple
    exit_after: tuple
    latent_dim: int
    num_classes: int
    mode: str = "hyperbolic"
    curvature: float = DEFAULT_CURVATURE
    tangent_clip: Optional[float] = None  # cap on the scaled tangent norm before the lift

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        object.__setattr__(self, "exit_after", tuple(int(e) for e in self.exit_after))
        if self.input_dim < 1 or not self.hidden_dims or min(self.hidden_dims) < 1:
            raise ContractError("input_dim and every hidden dim must be positive")
        ex = self.exit_after
        if len(ex) < 2:
            raise ContractError("need at least two exits")
        if any(b <= a for a, b in zip(ex, ex[1:])) or ex[0] < 0:
            raise ContractError("exit_after must be strictly increasing block indices")
        if ex[-1] != len(self.hidden_dims) - 1:
            raise ContractError("the last exit must sit after the last block")
        if self.latent_dim < 2:
            raise ContractError("latent_dim must be at least 2")
        if self.num_classes < 2:
            raise ContractError("need at least 2 classes")
        if self.mode not in MODES:
            raise ContractError(f"mode must be one of {MODES}, got {self.mode!r}")
        check_curvature(self.curvature)
        if self.tangent_clip is not None and not 0 < self.tangent_clip <= MAX_TANGENT_NORM:
            raise ContractError(f"tangent_clip must lie in (0, {MAX_TANGENT_NORM}], got {self.tangent_clip}")

    @property
    def num_exits(self) -> int:
        return len(self.exit_after)


@dataclass(frozen=True)
class LossConfig:
    exit_weights: Optional[tuple] = None  # None means 1.0 for every exit
    lam: float = 0.2
    detach_parent: bool = False
    exit_sampling: bool = False

    def __post_init__(self):
        if self.exit_weights is not None:
            w = tuple(float(x) for x in self.exit_weights)
            object.__setattr__(self, "exit_weights", w)
            if any(x < 0 for x in w) or not any(x > 0 for x in w):
                raise ContractError("exit weights must be nonnegative with at least one positive")
        if self.lam < 0:
            raise ContractError("lambda must be nonnegative")

    def weights(self, num_exits: int) -> tuple:
        if self.exit_weights is None:
            return (1.0,) * num_exits
        if len(self.exit_weights) != num_exits:
            raise ContractError(f"got {len(self.exit_weights)} exit weights for {num_exits} exits")
        return self.exit_weights


@dataclass
class ExitOutputs:
    """Per-exit tensors for a batch, shallowest exit first.

    ``embeddings`` holds hyperboloid points ``(B, n+1)`` in hyperbolic mode and
    unit vectors ``(B, n)`` in euclidean mode.
    """

    mode: str
    z: List[torch.Tensor] = field(default_factory=list)
    embeddings: List[torch.Tensor] = field(default_factory=list)
    logits: List[torch.Tensor] = field(default_factory=list)

    @property
    def num_exits(self) -> int:
        return len(self.logits)

    def norms(self) -> List[torch.Tensor]:
        if self.mode == "hyperbolic":
            return [spatial_norm(h) for h in self.embeddings]
        return [torch.linalg.vector_norm(e, dim=-1) for e in self.embeddings]


class MultiExitModel(nn.Module):
    def __init__(self, config: BackboneConfig):
        super().__init__()
        self.config = config
        widths = [config.input_dim, *config.hidden_dims]
        self.blocks = nn.ModuleList(
            nn.Linear(widths[i], widths[i + 1], dtype=torch.float64) for i in range(len(config.hidden_dims))
        )
        # Feature standardization; identity until fit_input_scaling_ is called.
        self.register_buffer("input_mean", torch.zeros(config.input_dim, dtype=torch.float64))
        self.register_buffer("input_scale", torch.ones(config.input_dim, dtype=torch.float64))
        n, C = config.latent_dim, config.num_classes
        self.projections = nn.ModuleList(
            nn.Linear(widths[b + 1], n, dtype=torch.float64) for b in config.exit_after
        )
        if config.mode == "hyperbolic":
            self.log_alpha = nn.Parameter(torch.zeros(config.num_exits, dtype=torch.float64))
            self.heads = nn.ModuleList(LorentzMLR(n, C, config.curvature) for _ in config.exit_after)
        else:
            self.log_alpha = None
            self.heads = nn.ModuleList(nn.Linear(n, C, dtype=torch.float64) for _ in config.exit_after)

    @property
    def alphas(self) -> Optional[torch.Tensor]:
        return None if self.log_alpha is None else self.log_alpha.exp()

    def forward(self, x: torch.Tensor) -> ExitOutputs:
        cfg = self.config
        if x.shape[-1] != cfg.input_dim:
            raise ContractError(f"input has {x.shape[-1]} features, model expects {cfg.input_dim}")
        out = ExitOutputs(cfg.mode)
        exits = {b: i for i, b in enumerate(cfg.exit_after)}
        a = (x - self.input_mean) / self.input_scale
        for b, block in enumerate(self.blocks):
            a = torch.tanh(block(a))
            i = exits.get(b)
            if i is None:
                continue
            z = self.projections[i](a)
            if cfg.mode == "hyperbolic":
                v = self.log_alpha[i].exp() * z
                if cfg.tangent_clip is not None:
                    norm = torch.linalg.vector_norm(v, dim=-1, keepdim=True).clamp_min(1e-12)
                    v = v * torch.clamp(cfg.tangent_clip / norm, max=1.0)
                emb = expmap0_space(v, cfg.curvature)
            else:
                emb = z / torch.linalg.vector_norm(z, dim=-1, keepdim=True).clamp_min(1e-12)
            out.z.append(z)
            out.embeddings.append(emb)
            out.logits.append(self.heads[i](emb))
        return out

    def fit_input_scaling_(self, X) -> None:
        """Set per-feature mean and std from ``X``; constant features keep scale 1."""
        X = torch.as_tensor(X, dtype=torch.float64)
        if X.ndim != 2 or X.shape[1] != self.config.input_dim or len(X) == 0:
            raise ContractError(f"need a non-empty (B, {self.config.input_dim}) matrix")
        std = X.std(dim=0, unbiased=False)
        self.input_mean.copy_(X.mean(0))
        self.input_scale.copy_(torch.where(std > 0, std, torch.ones_like(std)))

    def project_heads_(self) -> int:
        if self.config.mode != "hyperbolic":
            return 0
        return sum(h.project_() for h in self.heads)

    @property
    def hyperplane_projections(self) -> int:
        if self.config.mode != "hyperbolic":
            return 0
        return sum(h.projections for h in self.heads)


def build_model(config: BackboneConfig, seed: int = 0) -> MultiExitModel:
    """Construct a model with parameters drawn from a seeded generator."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return MultiExitModel(config)


def forward_with_exits(model: MultiExitModel, x) -> ExitOutputs:
    x = torch.as_tensor(x, dtype=torch.float64)
    return model(x)


def _check_labels(y: torch.Tensor, num_classes: int) -> torch.Tensor:
    y = torch.as_tensor(y, dtype=torch.long)
    if y.numel() and (int(y.min()) < 0 or int(y.max()) >= num_classes):
        raise ContractError(f"labels must lie in [0, {num_classes})")
    return y


def loss_terms(
    outputs: ExitOutputs,
    y,
    cfg: LossConfig = LossConfig(),
    cone: Optional[ConeConfig] = None,
    active_exits: Optional[Sequence[int]] = None,
) -> dict:
    """Batch-mean classification loss per exit and the summed entailment term.

    ``active_exits`` restricts the classification sum (used for per-batch exit
    sampling); weights still apply.
    """
    N = outputs.num_exits
    C = outputs.logits[0].shape[-1]
    y = _check_labels(y, C)
    w = cfg.weights(N)
    active = range(N) if active_exits is None else active_exits
    class_terms = [F.cross_entropy(outputs.logits[i], y) for i in range(N)]
    classification = sum(w[i] * class_terms[i] for i in active)
    entail = torch.zeros((), dtype=outputs.logits[0].dtype)
    if outputs.mode == "hyperbolic" and cfg.lam > 0:
        cone = cone or ConeConfig()
        for i in range(N - 1):
            pair = entailment_loss_pair(outputs.embeddings[i], outputs.embeddings[i + 1], cone, cfg.detach_parent)
            entail = entail + pair.mean()
    lam = cfg.lam if outputs.mode == "hyperbolic" else 0.0
    return {
        "class_terms": class_terms,
        "classification": classification,
        "entailment": entail,
        "total": classification + lam * entail,
    }


def total_loss(outputs: ExitOutputs, y, cfg: LossConfig = LossConfig(), cone: Optional[ConeConfig] = None):
    """``sum_i w_i CE(logits_i, y) + lambda * sum_i entail(h_{i+1}, h_i)``, averaged over the batch."""
    return loss_terms(outputs, y, cfg, cone)["total"]


@torch.no_grad()
def entailment_violation(outputs: ExitOutputs, cone: ConeConfig) -> float:
    """Mean ``max(0, ext - aper)`` over consecutive exit pairs and samples."""
    if outputs.mode != "hyperbolic":
        raise ContractError("entailment is defined for hyperbolic embeddings only")
    vals = [
        torch.relu(cone_margin(outputs.embeddings[i], outputs.embeddings[i + 1], cone))
        for i in range(outputs.num_exits - 1)
    ]
    return float(torch.stack(vals).mean())
