"""Lookahead retrieval inside entailment cones and traversal toward the root."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import torch

from ..entailment import ConeConfig, cone_membership
from ..errors import ContractError
from ..geometry import as_tensor, exp_map_origin, log_map_origin, lorentz_inner, origin
from ..storage import EmbeddingSet

DEFAULT_TRAVERSAL_STEPS = 50


@dataclass
class LookaheadResult:
    indices: np.ndarray  # into the reference set
    labels: np.ndarray
    majority: Optional[int]
    precision: Optional[float]  # share of retrieved labels equal to the query label

    @property
    def covered(self) -> bool:
        return len(self.indices) > 0


def lookahead(
    query,
    references: EmbeddingSet,
    T: float = 1.2,
    cone: Optional[ConeConfig] = None,
    query_label: Optional[int] = None,
    min_exit: Optional[int] = None,
) -> LookaheadResult:
    """Retrieve references with ``ext(query, ref) <= T * aper(query)``.

    ``min_exit`` keeps only references whose exit id is at least that value
    (pass the query's exit + 1 to look at deeper exits only). An empty result
    means the query has no coverage at this threshold; ``majority`` and
    ``precision`` are then ``None``.
    """
    if references.mode != "hyperbolic":
        raise ContractError("lookahead needs hyperbolic references")
    cone = cone or ConeConfig(c=references.curvature)
    q = as_tensor(query)
    refs = references
    base = np.arange(len(references))
    if min_exit is not None:
        if references.exit_ids is None:
            raise ContractError("references carry no exit ids")
        keep = references.exit_ids >= min_exit
        refs, base = references.select(keep), base[keep]
    if len(refs) == 0:
        return LookaheadResult(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), None, None)
    inside = cone_membership(q.unsqueeze(0), refs.points(), T, cone).numpy()
    idx = base[inside]
    labels = np.zeros(0, dtype=np.int64) if references.labels is None else references.labels[idx].astype(np.int64)
    majority = precision = None
    if len(labels):
        # ties go to the lowest label
        counts = Counter(labels.tolist())
        top = max(counts.values())
        majority = min(lbl for lbl, n in counts.items() if n == top)
        if query_label is not None:
            precision = float(np.mean(labels == query_label))
    return LookaheadResult(idx, labels, majority, precision)


@dataclass(frozen=True)
class TraversalStep:
    point: torch.Tensor
    neighbor: int
    neighbor_exit: Optional[int]
    neighbor_label: Optional[int]
    similarity: float


def euclidean_root(references: EmbeddingSet) -> torch.Tensor:
    """L2-normalized centroid of the reference vectors."""
    c = references.points().mean(0)
    norm = torch.linalg.vector_norm(c)
    if float(norm) == 0:
        raise ContractError("reference centroid is zero; the root is undefined")
    return c / norm


def interpolate_path(start, steps: int = DEFAULT_TRAVERSAL_STEPS, mode: str = "hyperbolic", root=None, c: float = 1.0):
    """Points from ``start`` to the root, both endpoints included.

    Hyperbolic: linear interpolation of the origin log-map image toward zero,
    mapped back with the exp map; the root is the origin. Euclidean: linear
    interpolation between unit vectors with re-normalization at each step.
    """
    if steps < 2:
        raise ContractError("a path needs at least 2 steps")
    start = as_tensor(start)
    t = torch.linspace(0.0, 1.0, steps, dtype=torch.float64)
    if mode == "hyperbolic":
        v = log_map_origin(start, c)
        path = exp_map_origin((1.0 - t).unsqueeze(-1) * v, c)
        return path
    if mode == "euclidean":
        if root is None:
            raise ContractError("euclidean traversal needs a root vector")
        s = start / torch.linalg.vector_norm(start)
        r = as_tensor(root)
        mix = (1.0 - t).unsqueeze(-1) * s + t.unsqueeze(-1) * r
        norms = torch.linalg.vector_norm(mix, dim=-1, keepdim=True)
        if bool((norms == 0).any()):
            raise ContractError("start is antipodal to the root; the interpolation passes through zero")
        return mix / norms
    raise ContractError(f"unknown mode {mode!r}")


def traverse(
    start,
    references: EmbeddingSet,
    steps: int = DEFAULT_TRAVERSAL_STEPS,
    root=None,
) -> List[TraversalStep]:
    """Walk from ``start`` to the root and report the nearest reference at each step.

    Hyperbolic similarity is the Lorentzian inner product (larger means closer,
    equivalently smaller geodesic distance); Euclidean similarity is cosine.
    """
    if len(references) == 0:
        raise ContractError("reference set is empty")
    mode, c = references.mode, references.curvature
    refs = references.points()
    if mode == "hyperbolic":
        path = interpolate_path(start, steps, "hyperbolic", c=c)
        sims = lorentz_inner(path.unsqueeze(1), refs.unsqueeze(0))
    else:
        unit = refs / torch.linalg.vector_norm(refs, dim=-1, keepdim=True)
        root = euclidean_root(references) if root is None else as_tensor(root)
        path = interpolate_path(start, steps, "euclidean", root=root)
        sims = path @ unit.T
    best = torch.argmax(sims, dim=1)
    out = []
    for i in range(steps):
        j = int(best[i])
        out.append(
            TraversalStep(
                path[i],
                j,
                None if references.exit_ids is None else int(references.exit_ids[j]),
                None if references.labels is None else int(references.labels[j]),
                float(sims[i, j]),
            )
        )
    return out


def collapse_path(steps: List[TraversalStep]) -> List[tuple]:
    """Run-length view of a traversal: consecutive duplicates of (label, exit) merged."""
    out = []
    for s in steps:
        key = (s.neighbor_label, s.neighbor_exit)
        if not out or out[-1] != key:
            out.append(key)
    return out


def hyperbolic_root(n: int, c: float = 1.0) -> torch.Tensor:
    return origin(n, c)

