"""Random trees and random forests grown with information gain, no pruning."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .dataset import Dataset, DataError, FeatureSchema, Record

# Gains at or below this are floating-point noise from equal-entropy partitions.
MIN_GAIN = 1e-10
TIE_TOL = 1e-12  # gains this close are equal; summation order differs between candidates

MASK64 = (1 << 64) - 1


def derive_seed(master: int, index: int) -> int:
    """Per-member seed: splitmix64 finalizer applied to ``master + (index + 1) * golden``."""
    z = (int(master) + (int(index) + 1) * 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def auto_features(n_features: int) -> int:
    return int(math.floor(math.log2(n_features))) + 1 if n_features > 0 else 1


@dataclass(frozen=True)
class TreeConfig:
    k_features: int | None = None  # None means auto
    min_leaf: int = 1
    max_depth: int | None = None
    seed: int = 0

    def resolved_k(self, n_features: int) -> int:
        if self.k_features is None:
            return min(auto_features(n_features), n_features)
        if not 1 <= self.k_features <= n_features:
            raise ValueError(f"k_features={self.k_features} outside [1, {n_features}]")
        return self.k_features


@dataclass(eq=False)
class TreeNode:
    """Leaf when ``feature < 0``; otherwise a numeric (``threshold`` set) or nominal split."""

    counts: np.ndarray
    feature: int = -1
    threshold: float | None = None
    children: list = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0

    def heaviest_child(self) -> int:
        sizes = [c.counts.sum() if c is not None else -1 for c in self.children]
        return int(np.argmax(sizes))

    def iter_nodes(self):
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(c for c in reversed(node.children) if c is not None)

    def structure(self):
        """Nested tuple description, used for equality checks."""
        if self.is_leaf:
            return ("leaf", tuple(self.counts.tolist()))
        return (
            self.feature,
            self.threshold,
            tuple(c.structure() if c is not None else None for c in self.children),
        )


class Split(NamedTuple):
    gain: float
    feature: int
    threshold: float | None  # None for a multiway nominal split


def entropy(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log2(p)).sum())


def _row_entropy(counts: np.ndarray) -> np.ndarray:
    totals = counts.sum(axis=1, keepdims=True)
    safe = np.where(totals > 0, totals, 1.0)
    p = counts / safe
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=1)


def _midpoint(a: float, b: float) -> float:
    m = (a + b) / 2.0
    return m if a <= m < b else a


def _numeric_split(x, onehot, counts, parent_h, min_leaf):
    n = x.size
    order = np.argsort(x, kind="stable")
    v = x[order]
    if v[0] == v[-1]:
        return None
    sizes = np.flatnonzero(v[1:] != v[:-1]) + 1
    sizes = sizes[(sizes >= min_leaf) & (sizes <= n - min_leaf)]
    if sizes.size == 0:
        return None
    cum = np.cumsum(onehot[order], axis=0)
    left = cum[sizes - 1]
    right = counts - left
    weighted = (sizes * _row_entropy(left) + (n - sizes) * _row_entropy(right)) / n
    best = int(np.flatnonzero(weighted <= weighted.min() + TIE_TOL)[0])
    b = sizes[best]
    return parent_h - weighted[best], _midpoint(v[b - 1], v[b])


def _nominal_split(x, y, n_values, n_classes, parent_h, min_leaf):
    n = x.size
    joint = np.bincount(x.astype(np.int64) * n_classes + y, minlength=n_values * n_classes)
    joint = joint.reshape(n_values, n_classes).astype(np.float64)
    sizes = joint.sum(axis=1)
    nonempty = sizes > 0
    if np.count_nonzero(nonempty) < 2 or (sizes[nonempty] < min_leaf).any():
        return None
    weighted = float((sizes * _row_entropy(joint)).sum() / n)
    return parent_h - weighted, None


class _Growth:
    """Shared arrays for growing one tree."""

    def __init__(self, X, y, n_classes, nominal, cards, min_leaf):
        self.X = X
        self.y = y
        self.n_classes = n_classes
        self.nominal = nominal
        self.cards = cards
        self.min_leaf = min_leaf
        self.onehot = np.eye(n_classes)[y]

    def evaluate(self, idx, feature, counts, parent_h):
        x = self.X[idx, feature]
        if self.nominal[feature]:
            res = _nominal_split(
                x, self.y[idx], int(self.cards[feature]), self.n_classes, parent_h, self.min_leaf
            )
        else:
            res = _numeric_split(x, self.onehot[idx], counts, parent_h, self.min_leaf)
        if res is None:
            return None
        return Split(res[0], feature, res[1])


def _better(a: Split | None, b: Split) -> bool:
    """Whether ``b`` beats the incumbent ``a`` (gain, then lower feature index)."""
    if a is None:
        return True
    if abs(b.gain - a.gain) <= TIE_TOL:
        return b.feature < a.feature
    return b.gain > a.gain


def best_split(ds: Dataset, candidate_features, indices=None) -> Split | None:
    """Highest-gain split over ``candidate_features`` among the records in ``indices``."""
    idx = np.arange(len(ds)) if indices is None else np.asarray(indices, dtype=np.int64)
    if idx.size < 2:
        return None
    g = _Growth(ds.X, ds.y, ds.schema.n_classes, ds.schema.nominal_mask, ds.schema.cardinalities, 1)
    counts = np.bincount(ds.y[idx], minlength=ds.schema.n_classes).astype(np.float64)
    h = entropy(counts)
    if h == 0:
        return None
    best = None
    for f in sorted(candidate_features):
        s = g.evaluate(idx, f, counts, h)
        if s is not None and s.gain > MIN_GAIN and _better(best, s):
            best = s
    return best


def grow_tree(X, y, schema: FeatureSchema, cfg: TreeConfig) -> TreeNode:
    if X.shape[0] == 0:
        raise DataError("cannot grow a tree on an empty dataset")
    d = schema.n_features
    C = schema.n_classes
    k = cfg.resolved_k(d)
    if cfg.min_leaf < 1:
        raise ValueError("min_leaf must be positive")
    g = _Growth(X, y, C, schema.nominal_mask, schema.cardinalities, cfg.min_leaf)
    rng = np.random.default_rng(cfg.seed)
    root = None
    stack = [(np.arange(X.shape[0]), 0, None, 0)]
    while stack:
        idx, depth, parent, slot = stack.pop()
        counts = np.bincount(y[idx], minlength=C).astype(np.float64)
        node = TreeNode(counts)
        if parent is None:
            root = node
        else:
            parent.children[slot] = node
        if (
            np.count_nonzero(counts) < 2
            or idx.size < 2 * cfg.min_leaf
            or (cfg.max_depth is not None and depth >= cfg.max_depth)
        ):
            continue
        h = entropy(counts)
        best = None
        evaluated = 0
        # draw k candidates; keep drawing past k only while nothing has positive gain
        for f in rng.permutation(d):
            if evaluated >= k and best is not None:
                break
            evaluated += 1
            s = g.evaluate(idx, int(f), counts, h)
            if s is not None and s.gain > MIN_GAIN and _better(best, s):
                best = s
        if best is None:
            continue
        node.feature = best.feature
        node.threshold = best.threshold
        x = X[idx, best.feature]
        if best.threshold is not None:
            parts = [idx[x <= best.threshold], idx[x > best.threshold]]
        else:
            V = int(schema.cardinalities[best.feature])
            xi = x.astype(np.int64)
            order = np.argsort(xi, kind="stable")
            bounds = np.searchsorted(xi[order], np.arange(V + 1))
            parts = [idx[order[bounds[v] : bounds[v + 1]]] for v in range(V)]
        node.children = [None] * len(parts)
        for slot_i in reversed(range(len(parts))):
            if parts[slot_i].size:
                stack.append((parts[slot_i], depth + 1, node, slot_i))
    return root


def train_random_tree(ds: Dataset, cfg: TreeConfig = TreeConfig()) -> TreeNode:
    if len(ds) == 0:
        raise DataError("cannot train a random tree on an empty dataset")
    return grow_tree(ds.X, ds.y, ds.schema, cfg)


def _route(node: TreeNode, values) -> TreeNode:
    while not node.is_leaf:
        v = values[node.feature]
        if node.threshold is not None:
            node = node.children[0 if v <= node.threshold else 1]
        else:
            vi = int(v)
            child = node.children[vi] if 0 <= vi < len(node.children) else None
            node = child if child is not None else node.children[node.heaviest_child()]
    return node


def predict_tree(root: TreeNode, record) -> np.ndarray:
    values = record.values if isinstance(record, Record) else record
    leaf = _route(root, np.asarray(values, dtype=np.float64))
    return leaf.counts / leaf.counts.sum()


def tree_predict_proba(root: TreeNode, X) -> np.ndarray:
    """Leaf class frequencies for every row of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    C = root.counts.size
    out = np.empty((X.shape[0], C))
    stack = [(root, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        if node.is_leaf:
            out[idx] = node.counts / node.counts.sum()
            continue
        x = X[idx, node.feature]
        if node.threshold is not None:
            mask = x <= node.threshold
            stack.append((node.children[0], idx[mask]))
            stack.append((node.children[1], idx[~mask]))
            continue
        xi = x.astype(np.int64)
        heavy = node.heaviest_child()
        valid = (xi >= 0) & (xi < len(node.children))
        target = np.full(xi.size, heavy)
        target[valid] = xi[valid]
        missing = np.array([c is None for c in node.children])
        target[missing[target]] = heavy
        for v in np.unique(target):
            stack.append((node.children[v], idx[target == v]))
    return out


# --- forests ------------------------------------------------------------------


@dataclass(frozen=True)
class ForestConfig:
    tree_count: int = 100
    bag_fraction: float = 0.66
    r_features: int | None = None  # None means auto
    seed: int = 0
    with_replacement: bool = False
    min_leaf: int = 1
    max_depth: int | None = None

    def __post_init__(self):
        if self.tree_count < 1:
            raise ValueError("tree_count must be at least 1")
        if not 0.0 < self.bag_fraction <= 1.0:
            raise ValueError("bag_fraction must lie in (0, 1]")

    def tree_config(self, index: int) -> TreeConfig:
        return TreeConfig(self.r_features, self.min_leaf, self.max_depth, derive_seed(self.seed, index))


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple[TreeNode, ...]
    config: ForestConfig
    class_values: tuple[str, ...]

    @property
    def n_classes(self) -> int:
        return len(self.class_values)

    def votes(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        counts = np.zeros((X.shape[0], self.n_classes))
        rows = np.arange(X.shape[0])
        for tree in self.trees:
            counts[rows, np.argmax(tree_predict_proba(tree, X), axis=1)] += 1
        return counts

    def predict_proba(self, X) -> np.ndarray:
        return self.votes(X) / len(self.trees)


def bag_indices(n: int, cfg: ForestConfig, index: int) -> np.ndarray:
    size = max(1, int(math.floor(cfg.bag_fraction * n + 0.5)))
    rng = np.random.default_rng([derive_seed(cfg.seed, index), 0xBA6])
    if cfg.with_replacement:
        return np.sort(rng.integers(0, n, size=size))
    return np.sort(rng.choice(n, size=size, replace=False))


def _train_member(X, y, schema, cfg: ForestConfig, index: int) -> TreeNode:
    bag = bag_indices(X.shape[0], cfg, index)
    return grow_tree(X[bag], y[bag], schema, cfg.tree_config(index))


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("NIDS_THREADS", "1")))
    except ValueError:
        return 1


def train_random_forest(ds: Dataset, cfg: ForestConfig = ForestConfig(), n_jobs: int | None = None) -> ForestModel:
    if len(ds) == 0:
        raise DataError("cannot train a random forest on an empty dataset")
    cfg.tree_config(0).resolved_k(ds.schema.n_features)
    n_jobs = default_jobs() if n_jobs is None else n_jobs
    if n_jobs > 1 and cfg.tree_count > 1:
        from joblib import Parallel, delayed

        trees = Parallel(n_jobs=n_jobs)(
            delayed(_train_member)(ds.X, ds.y, ds.schema, cfg, i) for i in range(cfg.tree_count)
        )
    else:
        trees = [_train_member(ds.X, ds.y, ds.schema, cfg, i) for i in range(cfg.tree_count)]
    return ForestModel(tuple(trees), cfg, ds.schema.class_values)


def predict_forest(model: ForestModel, record) -> np.ndarray:
    """Vote fractions; the modal class (ties to the lower index) is ``argmax``."""
    values = record.values if isinstance(record, Record) else record
    return model.predict_proba(np.asarray(values, dtype=np.float64)[None, :])[0]
