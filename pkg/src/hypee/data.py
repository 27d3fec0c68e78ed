"""Synthetic hierarchical data and CSV feature ingestion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, DataError


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian mixture with a two-level class hierarchy.

    Superclass centers sit at pairwise distance exactly ``separation``;
    subclass centers scatter around them with per-coordinate std
    ``subclass_spread``; samples scatter around subclass centers with
    per-coordinate std ``class_spread``. With ``modes_per_class > 1`` each
    subclass is an equal-weight union of that many such blobs, so subclasses
    of one superclass interleave and are no longer linearly separable.
    """

    num_superclasses: int = 4
    subclasses_per_superclass: int = 3
    samples_per_class: int = 100
    input_dim: int = 16
    class_spread: float = 1.0
    subclass_spread: float = 1.0
    separation: float = 8.0
    seed: int = 0
    modes_per_class: int = 1

    def __post_init__(self):
        if min(self.num_superclasses, self.subclasses_per_superclass, self.samples_per_class, self.modes_per_class) < 1:
            raise ContractError("class and sample counts must be positive")
        if self.num_superclasses > self.input_dim:
            raise ContractError("need input_dim >= num_superclasses to place separated centers")
        if not self.class_spread > 0 or self.subclass_spread < 0:
            raise ContractError("spreads must be positive")
        if not self.separation > self.class_spread:
            raise ContractError("separation must exceed the class spread")

    @property
    def num_classes(self) -> int:
        return self.num_superclasses * self.subclasses_per_superclass


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    superclass: Optional[np.ndarray] = None
    superclass_centers: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx) -> "Dataset":
        sup = None if self.superclass is None else self.superclass[idx]
        return Dataset(self.X[idx], self.y[idx], sup, self.superclass_centers)


def _random_rotation(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Draw a labeled dataset; class ``k`` belongs to superclass ``k // subclasses_per_superclass``."""
    rng = np.random.default_rng(spec.seed)
    d, S, P = spec.input_dim, spec.num_superclasses, spec.subclasses_per_superclass
    # Scaled, rotated basis vectors: every pair is exactly `separation` apart.
    basis = np.eye(d)[:S] * (spec.separation / math.sqrt(2.0))
    centers = basis @ _random_rotation(rng, d).T
    X, y, sup = [], [], []
    for s in range(S):
        for p in range(P):
            k = s * P + p
            modes = centers[s] + spec.subclass_spread * rng.standard_normal((spec.modes_per_class, d))
            which = np.arange(spec.samples_per_class) % spec.modes_per_class
            X.append(modes[which] + spec.class_spread * rng.standard_normal((spec.samples_per_class, d)))
            y.append(np.full(spec.samples_per_class, k))
            sup.append(np.full(spec.samples_per_class, s))
    return Dataset(np.concatenate(X), np.concatenate(y).astype(np.int64), np.concatenate(sup).astype(np.int64), centers)


def split(data: Dataset, fractions: Sequence[float], seed: int = 0) -> list:
    """Shuffle once and cut into consecutive parts of the given fractions."""
    if any(f < 0 for f in fractions) or not math.isclose(sum(fractions), 1.0):
        raise ContractError("split fractions must be nonnegative and sum to 1")
    perm = np.random.default_rng(seed).permutation(len(data))
    cuts = np.round(np.cumsum(fractions) * len(data)).astype(int)
    parts, start = [], 0
    for stop in cuts:
        parts.append(data.subset(perm[start:stop]))
        start = stop
    return parts


@dataclass(frozen=True)
class CsvSchema:
    label_column: str = "label"
    feature_columns: Optional[tuple] = None  # None: every column except the label
    delimiter: str = ","


def load_csv_features(path, schema: CsvSchema = CsvSchema()) -> Dataset:
    """Read numeric feature columns and an integer label column.

    Decimal point is ``.``. A header-only file gives an empty dataset.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row", code="schema") from None
        if schema.label_column not in header:
            raise DataError(f"{path}: missing label column {schema.label_column!r}", code="schema")
        feats = schema.feature_columns or tuple(h for h in header if h != schema.label_column)
        missing = [f for f in feats if f not in header]
        if missing:
            raise DataError(f"{path}: missing feature columns {missing}", code="schema")
        fidx = [header.index(f) for f in feats]
        lidx = header.index(schema.label_column)
        X, y = [], []
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {row_no} has {len(row)} cells, header has {len(header)}", code="schema")
            vals = []
            for j in fidx:
                try:
                    vals.append(float(row[j]))
                except ValueError:
                    raise DataError(
                        f"{path}: row {row_no}, column {header[j]!r}: non-numeric value {row[j]!r}", code="schema"
                    ) from None
            try:
                label = int(row[lidx])
            except ValueError:
                raise DataError(
                    f"{path}: row {row_no}, column {schema.label_column!r}: label {row[lidx]!r} is not an integer",
                    code="schema",
                ) from None
            if label < 0:
                raise DataError(f"{path}: row {row_no}: negative label {label}", code="schema")
            X.append(vals)
            y.append(label)
    X = np.asarray(X, dtype=np.float64).reshape(len(y), len(fidx))
    return Dataset(X, np.asarray(y, dtype=np.int64))


def feature_csv_text(data: Dataset, delimiter: str = ",") -> str:
    """Render features with ``repr`` precision plus the label column."""
    d = data.X.shape[1]
    lines = [delimiter.join([f"x{j}" for j in range(d)] + ["label"])]
    for row, label in zip(data.X, data.y):
        lines.append(delimiter.join([repr(float(v)) for v in row] + [str(int(label))]))
    return "\n".join(lines) + "\n"
