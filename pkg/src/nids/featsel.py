"""Information-gain ranking (filter) and cross-validated subset search (wrapper)."""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, DataError, stratified_folds
from .discretize import Method, apply_discretizer, fit_discretizer
from .evaluation import cross_validate
from .trees import entropy


@dataclass(frozen=True)
class FeatureRanking:
    entries: tuple[tuple[int, float], ...]  # (feature index, score), best first

    def top(self, n: int) -> list[int]:
        if n < 1:
            raise ValueError("must keep at least one feature")
        return [j for j, _ in self.entries[:n]]

    def to_csv(self, names) -> str:
        lines = ["feature_index,feature_name,score"]
        lines += [f"{j},{names[j]},{s!r}" for j, s in self.entries]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class FeatureSubset:
    indices: tuple[int, ...]
    achieved_score: float

    def __post_init__(self):
        if not self.indices:
            raise ValueError("a feature subset cannot be empty")
        object.__setattr__(self, "indices", tuple(sorted(self.indices)))

    def to_csv(self, names) -> str:
        lines = ["feature_index,feature_name,score"]
        lines += [f"{j},{names[j]},{self.achieved_score!r}" for j in self.indices]
        return "\n".join(lines) + "\n"


def conditional_entropy(x: np.ndarray, y: np.ndarray, n_classes: int) -> float:
    values, inverse = np.unique(x, return_inverse=True)
    joint = np.bincount(inverse * n_classes + y, minlength=values.size * n_classes)
    joint = joint.reshape(values.size, n_classes)
    sizes = joint.sum(axis=1)
    return float(sum(s * entropy(row) for s, row in zip(sizes, joint)) / y.size)


def info_gain_rank(ds: Dataset) -> FeatureRanking:
    """Score each feature by H(class) - H(class | feature).

    Numeric features are binned into 10 equal-width intervals first.
    """
    if len(ds) == 0:
        raise DataError("cannot rank features of an empty dataset")
    disc = fit_discretizer(ds, None, Method.EQUAL_WIDTH, 10)
    dds = apply_discretizer(disc, ds)
    C = ds.schema.n_classes
    h = entropy(ds.class_counts())
    scores = []
    for j in range(ds.schema.n_features):
        gain = h - conditional_entropy(dds.X[:, j], ds.y, C)
        scores.append((j, min(max(gain, 0.0), h)))
    scores.sort(key=lambda t: (-t[1], t[0]))
    return FeatureRanking(tuple(scores))


def project(ds: Dataset, subset) -> Dataset:
    """Restrict ``ds`` to the given features (a FeatureSubset or index iterable), kept in index order."""
    indices = subset.indices if isinstance(subset, FeatureSubset) else subset
    indices = sorted(set(int(j) for j in indices))
    if not indices:
        raise ValueError("empty feature selection")
    if indices[0] < 0 or indices[-1] >= ds.schema.n_features:
        raise IndexError("feature index out of range")
    return Dataset(ds.schema.select(indices), ds.X[:, indices], ds.y)


def subset_accuracy(learner, ds: Dataset, indices, plan) -> float:
    return cross_validate(learner, project(ds, indices), plan=plan).accuracy


def wrapper_search(
    ds: Dataset,
    learner,
    folds: int = 5,
    seed: int = 0,
    strategy: str = "greedy",
    stale_limit: int = 5,
    max_features: int | None = None,
) -> FeatureSubset:
    """Forward subset search scored by k-fold CV accuracy of ``learner``.

    ``strategy="greedy"`` adds the best single feature while accuracy
    improves. ``"best-first"`` keeps an open list and gives up after
    ``stale_limit`` expansions that do not improve the best subset.
    Ties go to the lower feature index; best-first also prefers the smaller subset.
    """
    plan = stratified_folds(ds, folds, seed)
    d = ds.schema.n_features
    limit = d if max_features is None else max_features
    cache: dict[tuple[int, ...], float] = {}

    def score(subset):
        if subset not in cache:
            cache[subset] = subset_accuracy(learner, ds, subset, plan)
        return cache[subset]

    if strategy == "greedy":
        current: tuple[int, ...] = ()
        current_score = -np.inf
        while len(current) < limit:
            best, best_score = None, -np.inf
            for f in range(d):
                if f in current:
                    continue
                cand = tuple(sorted(current + (f,)))
                s = score(cand)
                if s > best_score:
                    best, best_score = cand, s
            if best is None or best_score <= current_score:
                break
            current, current_score = best, best_score
        return FeatureSubset(current, float(current_score))

    if strategy != "best-first":
        raise ValueError(f"unknown search strategy {strategy!r}")
    best, best_score = None, -np.inf
    open_list: list = [(0.0, ())]  # min-heap of (-score, subset)
    closed = {()}
    stale = 0
    while open_list and stale < stale_limit:
        _, subset = heapq.heappop(open_list)
        improved = False
        if len(subset) < limit:
            for f in range(d):
                if f in subset:
                    continue
                cand = tuple(sorted(subset + (f,)))
                if cand in closed:
                    continue
                closed.add(cand)
                s = score(cand)
                heapq.heappush(open_list, (-s, cand))
                # ties: fewer features, then lower indices
                if s > best_score or (s == best_score and (len(cand), cand) < (len(best), best)):
                    if s > best_score:
                        improved = True
                    best, best_score = cand, s
        stale = 0 if improved else stale + 1
    if best is None:
        raise ValueError("no feature subset was evaluated")
    return FeatureSubset(best, float(best_score))
