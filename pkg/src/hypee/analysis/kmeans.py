"""k-means on the hyperboloid with Lorentzian centroids."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List

import numpy as np
import torch

from ..errors import ContractError
from ..geometry import DEFAULT_CURVATURE, as_tensor, geodesic_distance, lorentz_inner


@dataclass
class KMeansResult:
    assignments: np.ndarray
    centroids: torch.Tensor
    # Sum of squared Lorentzian distances, -2/c - 2<x, mu>_L, after each iteration.
    objective: List[float] = field(default_factory=list)
    # Sum of squared geodesic distances after each iteration.
    geodesic_sse: List[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    reseeded: int = 0


def lorentz_centroid(points, c: float = DEFAULT_CURVATURE) -> torch.Tensor:
    """``s / (sqrt(c) sqrt(|<s, s>_L|))`` with ``s`` the arithmetic mean of the points."""
    s = as_tensor(points).mean(0)
    return s / (math.sqrt(c) * torch.sqrt(lorentz_inner(s, s).abs()))


def _squared_lorentzian(points, centroids, c):
    return -2.0 / c - 2.0 * lorentz_inner(points.unsqueeze(1), centroids.unsqueeze(0))


def hyperbolic_kmeans(points, k: int, c: float = DEFAULT_CURVATURE, max_iters: int = 100, seed: int = 0) -> KMeansResult:
    """Alternate nearest-centroid assignment and Lorentzian-centroid updates.

    Starts from ``k`` distinct points drawn uniformly with ``seed``. An empty
    cluster is re-seeded with the point farthest from its current centroid.
    The Lorentzian centroid minimizes the summed squared Lorentzian distance of
    its members, and that distance is increasing in geodesic distance, so the
    recorded ``objective`` never increases.
    """
    X = as_tensor(points).to(torch.float64)
    n = len(X)
    if not 1 <= k <= n:
        raise ContractError(f"need 1 <= k <= number of points, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    centroids = X[torch.as_tensor(rng.choice(n, size=k, replace=False))].clone()
    result = KMeansResult(np.zeros(n, dtype=np.int64), centroids)
    assign = None
    for it in range(max_iters):
        D = geodesic_distance(X.unsqueeze(1), centroids.unsqueeze(0), c, check=False)
        new = torch.argmin(D, dim=1)
        new_centroids = centroids.clone()
        for j in range(k):
            members = new == j
            if not bool(members.any()):
                # Re-seed from the point worst served by its current centroid.
                far = int(torch.argmax(D[torch.arange(n), new]))
                new[far] = j
                members = new == j
                result.reseeded += 1
            new_centroids[j] = X[members][0] if int(members.sum()) == 1 else lorentz_centroid(X[members], c)
        changed = assign is None or not torch.equal(new, assign)
        assign, centroids = new, new_centroids
        L = _squared_lorentzian(X, centroids, c)[torch.arange(n), assign]
        G = geodesic_distance(X, centroids[assign], c, check=False)
        result.objective.append(float(L.clamp_min(0).sum()))
        result.geodesic_sse.append(float((G**2).sum()))
        result.iterations = it + 1
        if not changed:
            result.converged = True
            break
    result.assignments = assign.numpy()
    result.centroids = centroids
    return result
