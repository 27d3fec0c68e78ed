"""Per-exit histograms of embedding norms."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from ..storage import EmbeddingSet


@dataclass
class NormHistogram:
    edges: np.ndarray  # shared by every exit, len(bins) + 1
    counts: dict  # exit id -> counts per bin
    means: dict  # exit id -> mean norm

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["exit", "bin", "left", "right", "count"])
        for e in sorted(self.counts):
            for b, n in enumerate(self.counts[e]):
                w.writerow([e, b, repr(float(self.edges[b])), repr(float(self.edges[b + 1])), int(n)])
        return buf.getvalue()


def embedding_norms(es: EmbeddingSet) -> np.ndarray:
    """Spatial norms (hyperbolic) or vector norms (euclidean)."""
    return np.linalg.norm(np.asarray(es.space, dtype=np.float64), axis=1)


def norm_histogram(es: EmbeddingSet, bins: int = 30) -> NormHistogram:
    if bins < 1:
        raise ContractError("need at least one bin")
    if es.exit_ids is None:
        raise ContractError("embedding set carries no exit ids")
    norms = embedding_norms(es)
    lo, hi = (float(norms.min()), float(norms.max())) if len(norms) else (0.0, 1.0)
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    counts, means = {}, {}
    for e in np.unique(es.exit_ids).tolist():
        sel = norms[es.exit_ids == e]
        counts[int(e)] = np.histogram(sel, bins=edges)[0]
        means[int(e)] = float(sel.mean())
    return NormHistogram(edges, counts, means)
