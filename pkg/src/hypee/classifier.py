"""Lorentz multinomial logistic regression.

Each class owns a hyperplane through the hyperboloid, given by an ambient
spacelike normal ``w``. The logit of a point ``h`` is its signed distance to
that hyperplane, ``asinh(sqrt(c) <w, h>_L / |w|_L) / sqrt(c)``.

Normals are assembled from a spatial ``direction`` and a scalar ``offset`` as
``w = (sinh(sqrt(c) a) |z|, cosh(sqrt(c) a) z)``, for which ``<w, w>_L = |z|^2``.
The normal is spacelike whenever the direction is nonzero, and the offset
slides the hyperplane away from the origin.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from .errors import ContractError, NumericalError
from .geometry import DEFAULT_CURVATURE, as_tensor, check_curvature, lorentz_inner

MIN_DIRECTION_NORM = 1e-6


def hyperplane_normals(direction, offset, c: float = DEFAULT_CURVATURE) -> torch.Tensor:
    """Assemble ``(C, n + 1)`` ambient normals from ``(C, n)`` directions and ``(C,)`` offsets."""
    c = check_curvature(c)
    direction, offset = as_tensor(direction), as_tensor(offset)
    sc = math.sqrt(c)
    znorm = torch.linalg.vector_norm(direction, dim=-1)
    time = torch.sinh(sc * offset) * znorm
    space = torch.cosh(sc * offset).unsqueeze(-1) * direction
    if not (bool(torch.isfinite(time).all()) and bool(torch.isfinite(space).all())):
        if bool(torch.isfinite(direction).all()) and bool(torch.isfinite(offset).all()):
            raise NumericalError(f"hyperplane normal overflows (max |offset| {float(offset.detach().abs().max()):.3e})")
        raise ContractError("hyperplane parameters have non-finite components")
    return torch.cat([time.unsqueeze(-1), space], dim=-1)


def mlr_logits(h, normals, c: float = DEFAULT_CURVATURE, normal_sq=None) -> torch.Tensor:
    """Signed hyperbolic distances of ``h`` (..., n+1) to the hyperplanes ``normals`` (C, n+1).

    ``normal_sq`` optionally supplies ``<w, w>_L`` in closed form; computing it
    from the ambient coordinates cancels catastrophically for large offsets.
    """
    c = check_curvature(c)
    h, normals = as_tensor(h), as_tensor(normals)
    if normals.dim() != 2 or normals.shape[0] < 2:
        raise ContractError("need a (C, n+1) normal matrix with C >= 2")
    sq = lorentz_inner(normals, normals) if normal_sq is None else as_tensor(normal_sq)
    bad = (sq.detach() <= 0).nonzero().flatten()
    if bad.numel():
        k = int(bad[0])
        raise ContractError(f"hyperplane normal for class {k} is not spacelike (<w,w>_L = {float(sq[k].detach()):.3e})")
    wnorm = torch.sqrt(sq)
    inner = lorentz_inner(h.unsqueeze(-2), normals)
    sc = math.sqrt(c)
    return torch.asinh(sc * inner / wnorm) / sc


def predict(logits) -> torch.Tensor:
    """Argmax over the class axis; ties go to the lowest index."""
    logits = as_tensor(logits)
    # torch.argmax returns the first maximal index.
    return torch.argmax(logits, dim=-1)


class LorentzMLR(nn.Module):
    """Learnable Lorentz MLR head over ``n`` spatial dimensions and ``C`` classes."""

    def __init__(self, n: int, num_classes: int, c: float = DEFAULT_CURVATURE):
        super().__init__()
        if num_classes < 2:
            raise ContractError("Lorentz MLR needs at least 2 classes")
        self.c = check_curvature(c)
        self.direction = nn.Parameter(torch.randn(num_classes, n, dtype=torch.float64) / math.sqrt(n))
        self.offset = nn.Parameter(torch.zeros(num_classes, dtype=torch.float64))
        # Diagnostic counter for directions rescaled by project_().
        self.projections = 0

    def normals(self) -> torch.Tensor:
        return hyperplane_normals(self.direction, self.offset, self.c)

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        sq = (self.direction**2).sum(-1)
        return mlr_logits(h, self.normals(), self.c, normal_sq=sq)

    @torch.no_grad()
    def project_(self) -> int:
        """Keep every normal spacelike by pushing near-zero directions back out."""
        norms = torch.linalg.vector_norm(self.direction, dim=-1)
        small = norms < MIN_DIRECTION_NORM
        count = int(small.sum())
        if count:
            for k in small.nonzero().flatten().tolist():
                if float(norms[k]) > 0:
                    self.direction[k] *= MIN_DIRECTION_NORM / norms[k]
                else:
                    self.direction[k, 0] = MIN_DIRECTION_NORM
            self.projections += count
        return count
