"""The three-member detector: K2 Bayesian network, random tree and random forest.

The network sees discretized features; both tree members see the raw ones.
The fused class distribution is always the mean of the member distributions;
the fusion rule only decides the hard label.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .dataset import BINARY_CLASSES, Dataset, DataError, Record
from .evaluation import EvalReport, RocCurve, confusion, metrics, roc_points
from .learners import BayesNetClassifier, BayesNetLearner
from .trees import ForestConfig, ForestModel, TreeConfig, TreeNode, derive_seed, train_random_forest, train_random_tree, tree_predict_proba


class FusionRule(str, enum.Enum):
    ANOMALY_UNION = "union"
    MAJORITY_VOTE = "majority"
    AVERAGE_PROBABILITY = "average"


MEMBER_NAMES = ("bayes_net", "random_tree", "random_forest")


def fuse(member_probs, rule: FusionRule, anomaly: int = 1, majority_ties_to_anomaly: bool = True):
    """Fused ``(labels, distributions)`` from a list of per-member probability arrays."""
    rule = FusionRule(rule)
    stack = np.stack([np.asarray(p, dtype=np.float64) for p in member_probs])
    mean = stack.mean(axis=0)
    votes = np.argmax(stack, axis=2)  # (members, records)
    normal = 1 - anomaly
    if rule is FusionRule.ANOMALY_UNION:
        labels = np.where((votes == anomaly).any(axis=0), anomaly, normal)
    elif rule is FusionRule.MAJORITY_VOTE:
        n_anom = (votes == anomaly).sum(axis=0)
        n_norm = votes.shape[0] - n_anom
        tie = anomaly if majority_ties_to_anomaly else normal
        labels = np.where(n_anom > n_norm, anomaly, np.where(n_anom < n_norm, normal, tie))
    else:
        labels = np.argmax(mean, axis=1)
    return labels.astype(np.int64), mean


@dataclass(frozen=True, eq=False)
class CombinedModel:
    bn: BayesNetClassifier
    rtree: TreeNode
    rforest: ForestModel
    fusion_rule: FusionRule
    class_values: tuple[str, ...]

    @property
    def discretizer(self):
        return self.bn.discretizer

    @property
    def anomaly_index(self) -> int:
        return self.class_values.index("anomaly")

    def member_proba(self, X) -> list[np.ndarray]:
        X = np.asarray(X, dtype=np.float64)
        return [self.bn.predict_proba(X), tree_predict_proba(self.rtree, X), self.rforest.predict_proba(X)]

    def predict_labels(self, X) -> np.ndarray:
        return fuse(self.member_proba(X), self.fusion_rule, self.anomaly_index)[0]

    def predict_proba(self, X) -> np.ndarray:
        return fuse(self.member_proba(X), self.fusion_rule, self.anomaly_index)[1]


def _check_binary(ds: Dataset) -> None:
    if tuple(ds.schema.class_values) != BINARY_CLASSES:
        raise DataError(f"the combined detector needs classes {BINARY_CLASSES}, got {ds.schema.class_values}")


def train_combined(
    ds: Dataset,
    bn_learner: BayesNetLearner = BayesNetLearner(),
    tree_config: TreeConfig = TreeConfig(),
    forest_config: ForestConfig = ForestConfig(),
    fusion_rule: FusionRule | str = FusionRule.ANOMALY_UNION,
    seed: int = 0,
    n_jobs: int | None = None,
) -> CombinedModel:
    """Stage 1: discretize + K2 network; stage 2: random tree; stage 3: random forest.

    Member seeds are derived from ``seed``, overriding the configs' own.
    """
    _check_binary(ds)
    ds.require_nonempty()
    bn_member = bn_learner.fit(ds)
    rtree = train_random_tree(ds, replace(tree_config, seed=derive_seed(seed, 0)))
    rforest = train_random_forest(ds, replace(forest_config, seed=derive_seed(seed, 1)), n_jobs)
    return CombinedModel(bn_member, rtree, rforest, FusionRule(fusion_rule), ds.schema.class_values)


def predict_combined(model: CombinedModel, record):
    """``(label index, fused distribution, per-member argmax votes)`` for one record."""
    values = record.values if isinstance(record, Record) else record
    probs = model.member_proba(np.asarray(values, dtype=np.float64)[None, :])
    labels, dist = fuse(probs, model.fusion_rule, model.anomaly_index)
    votes = tuple(int(np.argmax(p[0])) for p in probs)
    return int(labels[0]), dist[0], votes


@dataclass(frozen=True)
class CombinedLearner:
    bn_learner: BayesNetLearner = BayesNetLearner()
    tree_config: TreeConfig = TreeConfig()
    forest_config: ForestConfig = ForestConfig()
    fusion_rule: FusionRule = FusionRule.ANOMALY_UNION
    seed: int = 0
    n_jobs: int | None = None
    name: str = "combined"

    def fit(self, ds: Dataset) -> CombinedModel:
        return train_combined(ds, self.bn_learner, self.tree_config, self.forest_config,
                              self.fusion_rule, self.seed, self.n_jobs)


@dataclass(frozen=True, eq=False)
class CombinedEvaluation:
    report: EvalReport
    roc: RocCurve | None
    member_reports: dict[str, EvalReport]


def evaluate_combined(model: CombinedModel, test: Dataset, build_time: float = 0.0,
                      mode: str = "test set") -> CombinedEvaluation:
    _check_binary(test)
    probs = model.member_proba(test.X)
    labels, dist = fuse(probs, model.fusion_rule, model.anomaly_index)
    cm = confusion(test.y, labels, test.schema.class_values)
    report = metrics(cm, dist, test.y, build_time, mode)
    members = {}
    for name, p in zip(MEMBER_NAMES, probs):
        members[name] = metrics(confusion(test.y, np.argmax(p, axis=1), test.schema.class_values), p, test.y)
    if model.fusion_rule is FusionRule.ANOMALY_UNION:
        a = model.anomaly_index
        for name, rep in members.items():
            col = rep.confusion.counts[:, a]
            fused = cm.counts[:, a]
            if fused[a] < col[a] or fused[1 - a] < col[1 - a]:
                raise AssertionError(f"union fusion lost an anomaly flag raised by {name}")
    pos = test.y == model.anomaly_index
    roc = roc_points(dist[:, model.anomaly_index], pos) if 0 < pos.sum() < pos.size else None
    return CombinedEvaluation(report, roc, members)
