"""Trainable configurations with a common ``fit(ds) -> model`` interface.

Fitted models expose ``predict_proba(X)`` over raw (undiscretized) feature
matrices, which is what cross-validation and the CLI consume.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import bayes_net as bn
from .dataset import Dataset
from .discretize import Discretizer, Method, apply_discretizer, fit_discretizer
from .naive_bayes import NBModel, train_nb
from .trees import ForestConfig, ForestModel, TreeConfig, TreeNode, train_random_forest, train_random_tree, tree_predict_proba


@dataclass(frozen=True, eq=False)
class DiscretizedModel:
    discretizer: Discretizer
    inner: object

    def predict_proba(self, X):
        return self.inner.predict_proba(self.discretizer.transform(np.asarray(X, dtype=np.float64)))


@dataclass(frozen=True, eq=False)
class TreeModel:
    root: TreeNode
    class_values: tuple[str, ...]

    def predict_proba(self, X):
        return tree_predict_proba(self.root, X)


@dataclass(frozen=True, eq=False)
class BayesNetClassifier:
    """Discretizer + network + junction tree; batch prediction uses the full-evidence factorization."""

    discretizer: Discretizer
    model: bn.BayesNetModel
    jtree: bn.JunctionTree

    def discretize(self, X) -> np.ndarray:
        return self.discretizer.transform(np.asarray(X, dtype=np.float64))

    def predict_proba(self, X):
        return self.model.predict_proba(self.discretize(X))

    def predict_record(self, values) -> np.ndarray:
        """Single record through junction-tree message passing."""
        return bn.predict_bn(self.model, self.jtree, self.discretize(np.asarray(values)[None, :])[0])


@dataclass(frozen=True, eq=False)
class ProjectedModel:
    indices: tuple[int, ...]
    inner: object

    def predict_proba(self, X):
        return self.inner.predict_proba(np.asarray(X)[:, list(self.indices)])


@dataclass(frozen=True)
class NaiveBayesLearner:
    smoothing: float = 1.0
    sigma_floor: float = 1e-3
    name: str = "nb"

    def fit(self, ds: Dataset) -> NBModel:
        return train_nb(ds, self.smoothing, self.sigma_floor)


@dataclass(frozen=True)
class DiscretizedNBLearner:
    method: Method = Method.EQUAL_WIDTH
    bins: int = 10
    smoothing: float = 1.0
    name: str = "nb-disc"

    def fit(self, ds: Dataset) -> DiscretizedModel:
        disc = fit_discretizer(ds, None, self.method, self.bins)
        return DiscretizedModel(disc, train_nb(apply_discretizer(disc, ds), self.smoothing))


@dataclass(frozen=True)
class BayesNetLearner:
    """K2-learned network over discretized features, class first in the ordering."""

    method: Method = Method.EQUAL_WIDTH
    bins: int = 10
    max_parents: int = 2
    alpha: float = 1.0
    structure: str = "k2"  # or "naive"
    name: str = "k2bn"

    def fit(self, ds: Dataset) -> BayesNetClassifier:
        disc = fit_discretizer(ds, None, self.method, self.bins)
        dds = apply_discretizer(disc, ds)
        if self.structure == "naive":
            structure = bn.NetworkStructure.naive(ds.schema.n_features)
        elif self.structure == "k2":
            structure = bn.k2_search(dds, None, self.max_parents, self.alpha, class_parent=True)
        else:
            raise ValueError(f"unknown structure {self.structure!r}")
        model = bn.fit_cpts(dds, structure, self.alpha)
        return BayesNetClassifier(disc, model, bn.build_junction_tree(structure))


@dataclass(frozen=True)
class RandomTreeLearner:
    config: TreeConfig = TreeConfig()
    name: str = "rtree"

    def fit(self, ds: Dataset) -> TreeModel:
        return TreeModel(train_random_tree(ds, self.config), ds.schema.class_values)


@dataclass(frozen=True)
class RandomForestLearner:
    config: ForestConfig = ForestConfig()
    n_jobs: int | None = None
    name: str = "rforest"

    def fit(self, ds: Dataset) -> ForestModel:
        return train_random_forest(ds, self.config, self.n_jobs)


@dataclass(frozen=True)
class SubsetLearner:
    """Train ``base`` on a fixed feature subset."""

    base: object
    indices: tuple[int, ...]
    name: str = "subset"

    def fit(self, ds: Dataset) -> ProjectedModel:
        from .featsel import project

        return ProjectedModel(tuple(self.indices), self.base.fit(project(ds, self.indices)))


@dataclass(frozen=True)
class FilterLearner:
    """Rank features by information gain on the training fold, keep the top ``top_n``."""

    base: object
    top_n: int
    name: str = "filter"

    def fit(self, ds: Dataset) -> ProjectedModel:
        from .featsel import info_gain_rank

        keep = tuple(sorted(info_gain_rank(ds).top(self.top_n)))
        return SubsetLearner(self.base, keep).fit(ds)
