"""Entailment cones on the hyperboloid.

A parent point ``x`` projects a cone away from the origin. Its half-aperture
shrinks as ``x`` moves outward, and a child ``y`` is inside the cone when the
exterior angle at ``x`` (between the direction away from the origin and the
direction toward ``y``) does not exceed that half-aperture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .errors import ContractError
from .geometry import (
    DEFAULT_CURVATURE,
    as_tensor,
    check_curvature,
    clamped_acos,
    clamped_asin,
    lorentz_inner,
    spatial_norm,
)

# Below this spatial norm a point is treated as the origin.
ROOT_NORM = 1e-12


@dataclass(frozen=True)
class ConeConfig:
    K: float = 0.1
    c: float = DEFAULT_CURVATURE

    def __post_init__(self):
        if not self.K > 0:
            raise ContractError(f"cone constant K must be positive, got {self.K}")
        check_curvature(self.c)


def half_aperture(x, cfg: ConeConfig = ConeConfig()) -> torch.Tensor:
    """``asin(clamp(2K / (sqrt(c) |x_s|), 0, 1))``, in (0, pi/2]."""
    x = as_tensor(x)
    norm = spatial_norm(x)
    if bool((norm.detach() < ROOT_NORM).any()):
        raise ContractError("half-aperture is undefined at the origin")
    return clamped_asin(2.0 * cfg.K / (math.sqrt(cfg.c) * norm))


def _exterior_cosine(x, y, c: float) -> torch.Tensor:
    x, y = as_tensor(x), as_tensor(y)
    norm = spatial_norm(x)
    if bool((norm.detach() < ROOT_NORM).any()):
        raise ContractError("exterior angle is undefined with the apex at the origin")
    cxy = c * lorentz_inner(x, y)
    sinh_sq = cxy * cxy - 1.0
    if bool((sinh_sq.detach() <= 0).any()):
        raise ContractError("exterior angle is undefined for coincident points")
    numer = y[..., 0] + x[..., 0] * cxy
    denom = norm * torch.sqrt(sinh_sq)
    return numer / denom


def exterior_angle(x, y, c: float = DEFAULT_CURVATURE) -> torch.Tensor:
    """Angle at ``x`` between the geodesic continuing away from the origin and the geodesic to ``y``.

    Equals ``pi`` minus the interior angle of the triangle (origin, x, y) at ``x``:
    0 when ``y`` lies farther out on the ray through ``x``, ``pi`` when it lies
    between the origin and ``x``.
    """
    c = check_curvature(c)
    return clamped_acos(_exterior_cosine(x, y, c))


def entailment_loss_pair(parent, child, cfg: ConeConfig = ConeConfig(), detach_parent: bool = False):
    """Hinge ``max(0, ext(parent, child) - aper(parent))``."""
    parent = as_tensor(parent)
    if detach_parent:
        parent = parent.detach()
    ext = exterior_angle(parent, child, cfg.c)
    return torch.relu(ext - half_aperture(parent, cfg))


def cone_margin(parent, child, cfg: ConeConfig = ConeConfig()) -> torch.Tensor:
    """Signed ``ext - aper``; negative inside the cone."""
    return exterior_angle(parent, child, cfg.c) - half_aperture(parent, cfg)


def cone_membership(parent, candidate, T: float = 1.0, cfg: ConeConfig = ConeConfig()) -> torch.Tensor:
    """Relaxed membership ``ext(parent, candidate) <= T * aper(parent)``.

    ``T = 1`` is the strict cone; larger ``T`` admits a superset.
    """
    if not T > 0:
        raise ContractError(f"threshold T must be positive, got {T}")
    with torch.no_grad():
        return exterior_angle(parent, candidate, cfg.c) <= T * half_aperture(parent, cfg)
