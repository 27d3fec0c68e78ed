"""Gromov delta-hyperbolicity of finite metric spaces."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

from ..errors import ContractError
from ..geometry import DEFAULT_CURVATURE, geodesic_distance, lift

# Empirical constant relating relative hyperbolicity to curvature.
CURVATURE_CONSTANT = 0.144

# Gromov products carry rounding error of order eps * diameter; deltas below
# this multiple of it are reported as exactly zero (tree metrics).
ROUNDOFF_FACTOR = 64


@dataclass(frozen=True)
class HyperbolicityReport:
    delta: float
    diameter: float
    delta_rel: float
    c_estimate: Optional[float]
    base_point: Optional[int]


def pairwise_distances(points, metric: str = "euclidean", c: float = DEFAULT_CURVATURE) -> np.ndarray:
    """Distance matrix of ``points``.

    For ``metric="lorentz"`` the rows are spatial coordinates lifted onto the
    hyperboloid of curvature ``c``.
    """
    P = torch.as_tensor(np.asarray(points, dtype=np.float64))
    if metric == "euclidean":
        D = torch.cdist(P, P)
        D.fill_diagonal_(0.0)
    elif metric == "lorentz":
        H = lift(P, c)
        D = geodesic_distance(H.unsqueeze(1), H.unsqueeze(0), c, check=False)
    else:
        raise ContractError(f"unknown metric {metric!r}")
    D = D.numpy()
    return np.maximum(D, D.T)


def gromov_products(D: np.ndarray, base: int) -> np.ndarray:
    """``(x|y)_w = (d(x,w) + d(y,w) - d(x,y)) / 2`` for a fixed base point ``w``."""
    row = D[base]
    return 0.5 * (row[:, None] + row[None, :] - D)


def delta_from_base(D: np.ndarray, base: int = 0) -> float:
    """``max_{x,y} [max_z min((x|z), (z|y)) - (x|y)]`` with products taken at ``base``.

    Cubic in the number of points (a max-min matrix product).
    """
    A = gromov_products(D, base)
    n = len(A)
    worst = 0.0
    # Chunked max-min product keeps memory at O(n^2 * chunk).
    chunk = max(1, min(n, 2_000_000 // max(n * n, 1)))
    for start in range(0, n, chunk):
        rows = A[start : start + chunk]
        mm = np.minimum(rows[:, :, None], A[None, :, :]).max(axis=1)
        worst = max(worst, float((mm - rows).max()))
    return worst


def delta_hyperbolicity(
    D: np.ndarray, base_point: Optional[int] = 0, c_estimate: bool = True
) -> HyperbolicityReport:
    """Delta-hyperbolicity of a distance matrix.

    With an integer ``base_point`` the Gromov products are taken at that point
    (cubic cost). This value ``delta_w`` satisfies ``delta_w <= delta <= 2 delta_w``
    where ``delta`` is the four-point constant over all quadruples. With
    ``base_point=None`` every point serves as base and the maximum is returned,
    which equals the four-point constant (quartic cost).
    """
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ContractError("need a square distance matrix")
    n = len(D)
    if n < 4:
        raise ContractError("delta-hyperbolicity needs at least 4 points")
    diameter = float(D.max())
    if not diameter > 0:
        raise ContractError("all points coincide (diameter 0)")
    if base_point is None:
        delta = max(delta_from_base(D, w) for w in range(n))
    else:
        if not 0 <= base_point < n:
            raise ContractError(f"base point {base_point} out of range")
        delta = delta_from_base(D, base_point)
    if delta <= ROUNDOFF_FACTOR * np.finfo(np.float64).eps * diameter:
        delta = 0.0
    rel = 2.0 * delta / diameter
    c = curvature_estimate(rel) if c_estimate and rel > 0 else None
    return HyperbolicityReport(delta, diameter, rel, c, base_point)


def points_hyperbolicity(points, metric: str = "euclidean", c: float = DEFAULT_CURVATURE, base_point: Optional[int] = 0):
    return delta_hyperbolicity(pairwise_distances(points, metric, c), base_point)


def curvature_estimate(delta_rel: float) -> float:
    """``(0.144 / delta_rel)^2``."""
    if not delta_rel > 0:
        raise ContractError("curvature estimate needs delta_rel > 0")
    return (CURVATURE_CONSTANT / delta_rel) ** 2
