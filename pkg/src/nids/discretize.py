"""Numeric-to-interval discretization (equal width, equal frequency, entropy/MDL)."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .dataset import NOMINAL, Dataset, Feature, FeatureSchema, SchemaError


class Method(str, enum.Enum):
    EQUAL_WIDTH = "equal-width"
    EQUAL_FREQUENCY = "equal-frequency"
    ENTROPY_MDL = "entropy-mdl"


@dataclass(frozen=True, eq=False)
class Discretizer:
    """Fitted cut points keyed by feature index.

    A value's bin is the number of cut points less than or equal to it, so
    cut points are left-inclusive bin boundaries and out-of-range values land
    in the edge bins.
    """

    cuts: dict[int, np.ndarray]
    method: Method
    bin_count: int
    feature_names: dict[int, str]

    def __post_init__(self):
        for j, c in self.cuts.items():
            if c.size > 1 and not np.all(np.diff(c) > 0):
                raise ValueError(f"cut points for feature {j} are not strictly increasing")

    def bin_index(self, feature: int, values) -> np.ndarray:
        return np.searchsorted(self.cuts[feature], np.asarray(values, dtype=np.float64), side="right")

    def transform_schema(self, schema: FeatureSchema) -> FeatureSchema:
        self._check(schema)
        features = list(schema.features)
        for j, c in self.cuts.items():
            features[j] = Feature(
                features[j].name, NOMINAL, tuple(f"bin_{b}" for b in range(c.size + 1))
            )
        return FeatureSchema(tuple(features), schema.class_values, schema.has_difficulty_column)

    def transform(self, X: np.ndarray) -> np.ndarray:
        out = np.array(X, dtype=np.float64, copy=True)
        for j, c in self.cuts.items():
            out[:, j] = np.searchsorted(c, out[:, j], side="right")
        return out

    def _check(self, schema: FeatureSchema) -> None:
        for j, name in self.feature_names.items():
            if j >= schema.n_features or schema.features[j].name != name:
                raise SchemaError(f"discretizer expects feature {name!r} at position {j}")
            if schema.features[j].is_nominal:
                raise SchemaError(f"feature {name!r} is already nominal")


def apply_discretizer(disc: Discretizer, ds: Dataset) -> Dataset:
    schema = disc.transform_schema(ds.schema)
    return Dataset(schema, disc.transform(ds.X), ds.y)


def fit_discretizer(
    ds: Dataset,
    feature_indices=None,
    method: Method | str = Method.EQUAL_WIDTH,
    bin_count: int = 10,
) -> Discretizer:
    """Fit cut points for the numeric features in ``feature_indices`` (default: all)."""
    method = Method(method)
    if feature_indices is None:
        feature_indices = [j for j, f in enumerate(ds.schema.features) if not f.is_nominal]
    feature_indices = sorted(set(int(j) for j in feature_indices))
    for j in feature_indices:
        if ds.schema.features[j].is_nominal:
            raise SchemaError(f"feature {ds.schema.features[j].name!r} is nominal")
    if method is not Method.ENTROPY_MDL and bin_count < 2:
        raise ValueError("bin_count must be at least 2")
    if len(feature_indices) and len(ds) == 0:
        raise ValueError("cannot fit a discretizer on an empty dataset")
    cuts = {}
    for j in feature_indices:
        col = ds.X[:, j]
        if method is Method.EQUAL_WIDTH:
            cuts[j] = equal_width_cuts(col, bin_count)
        elif method is Method.EQUAL_FREQUENCY:
            cuts[j] = equal_frequency_cuts(col, bin_count)
        else:
            cuts[j] = np.array(
                [c for c, _, _ in entropy_mdl_cuts(col, ds.y, ds.schema.n_classes)], dtype=np.float64
            )
            cuts[j].sort()
    names = {j: ds.schema.features[j].name for j in feature_indices}
    return Discretizer(cuts, method, bin_count, names)


def equal_width_cuts(values, bins: int) -> np.ndarray:
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi <= lo:
        return np.empty(0)
    cuts = np.array([lo + (hi - lo) * i / bins for i in range(1, bins)])
    return np.unique(cuts)


def equal_frequency_cuts(values, bins: int) -> np.ndarray:
    """Cuts at the value boundaries closest to the ideal quantile positions."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    n = v.size
    boundaries = np.flatnonzero(v[1:] != v[:-1]) + 1
    if boundaries.size == 0:
        return np.empty(0)
    targets = np.arange(1, bins) * n / bins
    pos = np.searchsorted(boundaries, targets)
    lower = boundaries[np.clip(pos - 1, 0, boundaries.size - 1)]
    upper = boundaries[np.clip(pos, 0, boundaries.size - 1)]
    nearest = np.where(np.abs(targets - lower) <= np.abs(upper - targets), lower, upper)
    nearest = np.unique(nearest)
    return np.unique([_midpoint(v[b - 1], v[b]) for b in nearest])


def _midpoint(a: float, b: float) -> float:
    m = (a + b) / 2.0
    # keeps a < m <= b so that b lands in the upper bin
    return m if a < m <= b else b


def _entropy_rows(counts: np.ndarray) -> np.ndarray:
    totals = counts.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(totals > 0, counts / np.where(totals > 0, totals, 1), 0.0)
        logs = np.where(p > 0, np.log2(np.where(p > 0, p, 1)), 0.0)
    return -(p * logs).sum(axis=-1)


def mdl_threshold(counts: np.ndarray, left: np.ndarray, right: np.ndarray) -> float:
    """Minimum gain (bits) a binary cut needs under the Fayyad-Irani MDL test."""
    n = counts.sum()
    k = int(np.count_nonzero(counts))
    k1 = int(np.count_nonzero(left))
    k2 = int(np.count_nonzero(right))
    ent, ent1, ent2 = _entropy_rows(np.stack([counts, left, right]).astype(float))
    delta = math.log2(3**k - 2) - (k * ent - k1 * ent1 - k2 * ent2)
    return (math.log2(n - 1) + delta) / n


def entropy_mdl_cuts(values, labels, n_classes: int):
    """Recursive entropy-minimizing binary cuts, kept only when they pass the MDL test.

    Returns ``(cut, lo, hi)`` triples where ``[lo, hi)`` is the slice of the
    sorted data on which the cut was accepted, in discovery order.
    """
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    v = values[order]
    y = np.asarray(labels)[order]
    onehot = np.zeros((v.size, n_classes))
    onehot[np.arange(v.size), y] = 1.0
    cum = np.vstack([np.zeros(n_classes), np.cumsum(onehot, axis=0)])
    accepted = []
    stack = [(0, v.size)]
    while stack:
        lo, hi = stack.pop()
        if hi - lo < 2:
            continue
        seg = v[lo:hi]
        bounds = np.flatnonzero(seg[1:] != seg[:-1]) + 1 + lo
        if bounds.size == 0:
            continue
        total = cum[hi] - cum[lo]
        left = cum[bounds] - cum[lo]
        right = total - left
        nl = left.sum(axis=1)
        nr = right.sum(axis=1)
        n = hi - lo
        weighted = (nl * _entropy_rows(left) + nr * _entropy_rows(right)) / n
        best = int(np.argmin(weighted))
        gain = _entropy_rows(total[None, :])[0] - weighted[best]
        b = bounds[best]
        if gain <= 0 or gain <= mdl_threshold(total, left[best], right[best]):
            continue
        accepted.append((_midpoint(v[b - 1], v[b]), lo, hi))
        stack.append((b, hi))
        stack.append((lo, b))
    return accepted
