"""Geometric analyses of learned embeddings."""

from .delta import (
    HyperbolicityReport,
    curvature_estimate,
    delta_from_base,
    delta_hyperbolicity,
    gromov_products,
    pairwise_distances,
    points_hyperbolicity,
)
from .histogram import NormHistogram, embedding_norms, norm_histogram
from .kmeans import KMeansResult, hyperbolic_kmeans, lorentz_centroid
from .retrieval import (
    DEFAULT_TRAVERSAL_STEPS,
    LookaheadResult,
    TraversalStep,
    collapse_path,
    euclidean_root,
    hyperbolic_root,
    interpolate_path,
    lookahead,
    traverse,
)

__all__ = [
    "DEFAULT_TRAVERSAL_STEPS",
    "HyperbolicityReport",
    "KMeansResult",
    "LookaheadResult",
    "NormHistogram",
    "TraversalStep",
    "collapse_path",
    "curvature_estimate",
    "delta_from_base",
    "delta_hyperbolicity",
    "embedding_norms",
    "euclidean_root",
    "gromov_products",
    "hyperbolic_root",
    "hyperbolic_kmeans",
    "interpolate_path",
    "lookahead",
    "lorentz_centroid",
    "norm_histogram",
    "pairwise_distances",
    "points_hyperbolicity",
    "traverse",
]
