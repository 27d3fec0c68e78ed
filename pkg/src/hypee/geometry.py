"""Lorentz-model primitives.

Points live on the upper sheet of the hyperboloid ``<x, x>_L = -1/c`` inside
Minkowski space. Every ambient vector is laid out time-first, ``(time, space_1,
..., space_n)``, and the leading axis convention is ``(..., n + 1)`` so all
functions broadcast over batches.

The time coordinate of a point is never stored independently: it is always
recomputed from the space part by :func:`lift`.
"""

from __future__ import annotations

import math

import torch

from .errors import ContractError, ManifoldError, TangentOverflowError

DEFAULT_CURVATURE = 1.0
MAX_TANGENT_NORM = 32.0
DEGENERATE_NORM = 1e-12
MANIFOLD_TOL = 1e-6


def as_tensor(x) -> torch.Tensor:
    """Return ``x`` as a tensor; non-tensors become float64."""
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(x, dtype=torch.float64)


def check_curvature(c: float) -> float:
    c = float(c)
    if not (c > 0 and math.isfinite(c)):
        raise ContractError(f"curvature must be positive and finite, got {c}")
    return c


def _check_finite(x: torch.Tensor, what: str) -> None:
    if not bool(torch.isfinite(x).all()):
        raise ContractError(f"{what} has non-finite components")


def _safe_norm(v: torch.Tensor) -> torch.Tensor:
    # Gradient of sqrt stays finite at the zero vector.
    return torch.sqrt(torch.clamp((v * v).sum(-1), min=1e-300))


class _ClampedAsin(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x):
        ctx.save_for_backward(x)
        return torch.asin(torch.clamp(x, -1.0, 1.0))

    @staticmethod
    def backward(ctx, grad):
        (x,) = ctx.saved_tensors
        inside = x.abs() < 1.0
        denom = torch.sqrt(torch.where(inside, 1.0 - x * x, torch.ones_like(x)))
        return torch.where(inside, grad / denom, torch.zeros_like(x))


class _ClampedAcos(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x):
        ctx.save_for_backward(x)
        return torch.acos(torch.clamp(x, -1.0, 1.0))

    @staticmethod
    def backward(ctx, grad):
        (x,) = ctx.saved_tensors
        inside = x.abs() < 1.0
        denom = torch.sqrt(torch.where(inside, 1.0 - x * x, torch.ones_like(x)))
        return torch.where(inside, -grad / denom, torch.zeros_like(x))


def clamped_asin(x: torch.Tensor) -> torch.Tensor:
    """``asin`` of ``x`` clamped to [-1, 1]; the gradient is 0 at and beyond the clamp."""
    return _ClampedAsin.apply(x)


def clamped_acos(x: torch.Tensor) -> torch.Tensor:
    """``acos`` of ``x`` clamped to [-1, 1]; the gradient is 0 at and beyond the clamp."""
    return _ClampedAcos.apply(x)


def lorentz_inner(x, y, keepdim: bool = False) -> torch.Tensor:
    """Lorentzian inner product ``-x_t*y_t + <x_s, y_s>``."""
    x, y = as_tensor(x), as_tensor(y)
    if x.shape[-1] != y.shape[-1]:
        raise ContractError(
            f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]} ambient coordinates"
        )
    _check_finite(x, "x")
    _check_finite(y, "y")
    out = -x[..., 0] * y[..., 0] + (x[..., 1:] * y[..., 1:]).sum(-1)
    return out.unsqueeze(-1) if keepdim else out


def lift(space, c: float = DEFAULT_CURVATURE) -> torch.Tensor:
    """Attach the time coordinate ``sqrt(1/c + |space|^2)`` to a spatial vector."""
    c = check_curvature(c)
    space = as_tensor(space)
    if space.shape[-1] < 1:
        raise ContractError("spatial dimension must be at least 1")
    _check_finite(space, "space")
    time = torch.sqrt(1.0 / c + (space * space).sum(-1, keepdim=True))
    return torch.cat([time, space], dim=-1)


def origin(n: int, c: float = DEFAULT_CURVATURE, dtype=torch.float64) -> torch.Tensor:
    """The hyperboloid origin ``(1/sqrt(c), 0, ..., 0)``."""
    return lift(torch.zeros(n, dtype=dtype), c)


def tangent(space) -> torch.Tensor:
    """Ambient tangent vector at the origin: zero time, the given space part."""
    space = as_tensor(space)
    return torch.cat([torch.zeros_like(space[..., :1]), space], dim=-1)


def spatial_norm(x) -> torch.Tensor:
    """Euclidean norm of the space components."""
    x = as_tensor(x)
    return torch.linalg.vector_norm(x[..., 1:], dim=-1)


def manifold_residual(x, c: float = DEFAULT_CURVATURE) -> torch.Tensor:
    """``|<x, x>_L + 1/c|`` for each point."""
    c = check_curvature(c)
    return (lorentz_inner(x, x) + 1.0 / c).abs()


def check_on_manifold(x, c: float = DEFAULT_CURVATURE, tol: float = MANIFOLD_TOL) -> torch.Tensor:
    """Raise :class:`ManifoldError` unless every point satisfies the hyperboloid constraint.

    The residual is compared relative to ``max(1, time**2)`` since the constraint
    is a difference of two squares that both grow like ``time**2``.
    """
    x = as_tensor(x)
    c = check_curvature(c)
    if x.shape[-1] < 2:
        raise ManifoldError("a hyperboloid point needs at least 2 ambient coordinates")
    with torch.no_grad():
        scale = torch.clamp(x[..., 0].detach() ** 2, min=1.0)
        resid = manifold_residual(x.detach(), c) / scale
        if bool((x[..., 0] <= 0).any()) or bool((resid > tol).any()):
            worst = float(resid.max()) if resid.numel() else 0.0
            raise ManifoldError(f"point off the hyperboloid (relative residual {worst:.3e})")
    return x


def geodesic_distance(x, y, c: float = DEFAULT_CURVATURE, check: bool = True) -> torch.Tensor:
    """Geodesic distance ``acosh(-c <x, y>_L) / sqrt(c)``.

    Evaluated in the equivalent form ``2/sqrt(c) * asinh(sqrt(c) * |x - y|_L / 2)``
    where ``|x - y|_L^2 = -2/c - 2<x, y>_L``; the squared chord is clamped at 0,
    which is the same guard as clamping the acosh argument at 1. This keeps
    ``d(x, x) == 0`` exactly and stays accurate for nearby points.
    """
    c = check_curvature(c)
    x, y = as_tensor(x), as_tensor(y)
    if check:
        check_on_manifold(x, c)
        check_on_manifold(y, c)
    diff = x - y
    chord_sq = torch.clamp(lorentz_inner(diff, diff), min=0.0)
    sc = math.sqrt(c)
    return 2.0 / sc * torch.asinh(sc * torch.sqrt(chord_sq) / 2.0)


def distance_to_origin(x, c: float = DEFAULT_CURVATURE) -> torch.Tensor:
    """Geodesic distance from the origin, ``asinh(sqrt(c) |x_s|) / sqrt(c)``."""
    c = check_curvature(c)
    sc = math.sqrt(c)
    return torch.asinh(sc * spatial_norm(x)) / sc


def expmap0_space(v_space, c: float = DEFAULT_CURVATURE) -> torch.Tensor:
    """Exponential map at the origin for a tangent given by its space part only."""
    c = check_curvature(c)
    v_space = as_tensor(v_space)
    _check_finite(v_space, "tangent")
    norm = _safe_norm(v_space)
    if bool((norm.detach() > MAX_TANGENT_NORM).any()):
        raise TangentOverflowError(
            f"tangent norm {float(norm.detach().max()):.3f} exceeds the lift limit {MAX_TANGENT_NORM}"
        )
    r = math.sqrt(c) * norm
    degenerate = r < DEGENERATE_NORM
    r_safe = torch.where(degenerate, torch.ones_like(r), r)
    # sinh(r) / r -> 1 as r -> 0
    factor = torch.where(degenerate, torch.ones_like(r), torch.sinh(r_safe) / r_safe)
    return lift(factor.unsqueeze(-1) * v_space, c)


def exp_map_origin(v, c: float = DEFAULT_CURVATURE) -> torch.Tensor:
    """Map an origin tangent ``(0, v_s)`` onto the hyperboloid along its geodesic.

    The space part is ``sinh(sqrt(c)|v_s|) / (sqrt(c)|v_s|) * v_s``; the time part
    comes from :func:`lift`. ``v = 0`` returns the origin.
    """
    v = as_tensor(v)
    if v.shape[-1] < 2:
        raise ContractError("an ambient tangent needs at least 2 coordinates")
    if bool((v[..., 0].detach() != 0).any()):
        raise ContractError("origin tangents must have a zero time component")
    return expmap0_space(v[..., 1:], c)


def log_map_origin(x, c: float = DEFAULT_CURVATURE, check: bool = True) -> torch.Tensor:
    """Inverse of :func:`exp_map_origin`; returns an ambient tangent with zero time."""
    c = check_curvature(c)
    x = as_tensor(x)
    if check:
        check_on_manifold(x, c)
    space = x[..., 1:]
    s = _safe_norm(space)
    sc = math.sqrt(c)
    degenerate = s < DEGENERATE_NORM
    s_safe = torch.where(degenerate, torch.ones_like(s), s)
    factor = torch.where(degenerate, torch.ones_like(s), torch.asinh(sc * s_safe) / (sc * s_safe))
    return tangent(factor.unsqueeze(-1) * space)


def scale_then_lift(z, alpha, c: float = DEFAULT_CURVATURE) -> torch.Tensor:
    """Scale a Euclidean vector by ``alpha > 0`` and lift it with the origin exp map."""
    z, alpha = as_tensor(z), as_tensor(alpha)
    if bool((alpha.detach() <= 0).any()):
        raise ContractError("scale alpha must be positive")
    return expmap0_space(alpha.unsqueeze(-1) * z if alpha.dim() else alpha * z, c)
