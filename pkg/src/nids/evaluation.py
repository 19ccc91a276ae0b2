"""Confusion matrices, the weighted metric suite, cross-validation and ROC curves."""
from __future__ import annotations

import io
import platform
import time
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, stratified_folds


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    counts: np.ndarray  # rows actual, columns predicted
    labels: tuple[str, ...]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def correct(self) -> int:
        return int(np.trace(self.counts))

    def __eq__(self, other):
        return (
            isinstance(other, ConfusionMatrix)
            and self.labels == other.labels
            and np.array_equal(self.counts, other.counts)
        )


def confusion(actual, predicted, labels) -> ConfusionMatrix:
    labels = tuple(labels)
    C = len(labels)
    actual = np.asarray(actual, dtype=np.int64).reshape(-1)
    predicted = np.asarray(predicted, dtype=np.int64).reshape(-1)
    if actual.shape != predicted.shape:
        raise ValueError("actual and predicted lengths differ")
    for arr in (actual, predicted):
        if arr.size and (arr.min() < 0 or arr.max() >= C):
            raise IndexError("class index outside the label set")
    counts = np.bincount(actual * C + predicted, minlength=C * C).reshape(C, C)
    return ConfusionMatrix(counts, labels)


@dataclass(frozen=True, eq=False)
class EvalReport:
    confusion: ConfusionMatrix
    accuracy: float
    tp_rate: float
    fp_rate: float
    precision: float
    recall: float
    f_measure: float
    rmse: float
    build_time_seconds: float = 0.0
    mode: str = ""
    probabilities: np.ndarray | None = field(default=None, repr=False)
    actual: np.ndarray | None = field(default=None, repr=False)

    @property
    def incorrect(self) -> int:
        return self.confusion.total - self.confusion.correct

    def metric_rows(self) -> list[tuple[str, str]]:
        cm = self.confusion
        return [
            ("Correctly Classified Instances", f"{cm.correct} ({100 * self.accuracy:.2f}%)"),
            ("Incorrectly Classified Instances", f"{self.incorrect} ({100 * (1 - self.accuracy):.2f}%)"),
            ("Total Number of Instances", str(cm.total)),
            ("Root mean squared error", f"{self.rmse:.4f}"),
            ("TP Rate", f"{self.tp_rate:.3f}"),
            ("FP Rate", f"{self.fp_rate:.3f}"),
            ("Precision", f"{self.precision:.3f}"),
            ("Recall", f"{self.recall:.3f}"),
            ("F-Measure", f"{self.f_measure:.3f}"),
        ]

    def to_text(self, title: str = "") -> str:
        out = io.StringIO()
        if title:
            out.write(f"=== {title} ===\n")
        if self.mode:
            out.write(f"Evaluation: {self.mode}\n")
        width = max(len(k) for k, _ in self.metric_rows())
        for k, v in self.metric_rows():
            out.write(f"{k:<{width}}  {v}\n")
        out.write(f"{'Model Building Time':<{width}}  {self.build_time_seconds:.2f} seconds "
                  f"({platform.machine()}, {platform.python_implementation()} {platform.python_version()})\n")
        out.write("Confusion matrix (rows actual, columns predicted):\n")
        out.write("  " + " ".join(f"{lab:>10}" for lab in self.confusion.labels) + "\n")
        for lab, row in zip(self.confusion.labels, self.confusion.counts):
            out.write("  " + " ".join(f"{v:>10d}" for v in row) + f"  | {lab}\n")
        return out.getvalue()

    CSV_COLUMNS = (
        "algorithm", "mode", "correct", "incorrect", "total", "accuracy", "rmse",
        "tp_rate", "fp_rate", "precision", "recall", "f_measure",
        "build_time_s_nondeterministic",
    )

    def csv_row(self, algorithm: str) -> list[str]:
        cm = self.confusion
        return [
            algorithm, self.mode, str(cm.correct), str(self.incorrect), str(cm.total),
            repr(self.accuracy), repr(self.rmse), repr(self.tp_rate), repr(self.fp_rate),
            repr(self.precision), repr(self.recall), repr(self.f_measure),
            f"{self.build_time_seconds:.3f}",
        ]


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    return np.divide(num, den, out=np.zeros_like(num, dtype=np.float64), where=den > 0)


def metrics(cm: ConfusionMatrix, probabilities=None, actual=None, build_time: float = 0.0, mode: str = "") -> EvalReport:
    """Support-weighted metric suite; RMSE over class-probability vectors against one-hot truth."""
    counts = cm.counts.astype(np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("cannot compute metrics of an empty confusion matrix")
    tp = np.diag(counts)
    support = counts.sum(axis=1)
    predicted = counts.sum(axis=0)
    fn = support - tp
    fp = predicted - tp
    tn = total - tp - fn - fp
    recall = _safe_div(tp, tp + fn)
    fpr = _safe_div(fp, fp + tn)
    precision = _safe_div(tp, tp + fp)
    f = _safe_div(2 * precision * recall, precision + recall)
    w = support / total
    rmse = float("nan")
    if probabilities is not None:
        P = np.asarray(probabilities, dtype=np.float64)
        a = np.asarray(actual, dtype=np.int64)
        onehot = np.zeros_like(P)
        onehot[np.arange(a.size), a] = 1.0
        rmse = float(np.sqrt(np.mean((P - onehot) ** 2)))
    return EvalReport(
        confusion=cm,
        accuracy=float(tp.sum() / total),
        tp_rate=float(w @ recall),
        fp_rate=float(w @ fpr),
        precision=float(w @ precision),
        recall=float(w @ recall),
        f_measure=float(w @ f),
        rmse=rmse,
        build_time_seconds=build_time,
        mode=mode,
        probabilities=None if probabilities is None else np.asarray(probabilities),
        actual=None if actual is None else np.asarray(actual),
    )


def evaluate_model(model, ds: Dataset, build_time: float = 0.0, mode: str = "test set") -> EvalReport:
    proba = model.predict_proba(ds.X)
    cm = confusion(ds.y, np.argmax(proba, axis=1), ds.schema.class_values)
    return metrics(cm, proba, ds.y, build_time, mode)


def cross_validate(learner, ds: Dataset, k: int = 10, seed: int = 0, plan=None) -> EvalReport:
    """Pooled out-of-fold evaluation.

    ``learner.fit(train)`` must return a model with ``predict_proba(X)`` and,
    optionally, ``predict_labels(X)`` when the hard label is not the argmax.
    Everything fitted (discretizers, rankings) is fitted inside the fold.
    """
    if k < 2:
        raise ValueError("cross-validation needs k >= 2")
    plan = plan or stratified_folds(ds, k, seed)
    C = ds.schema.n_classes
    proba = np.zeros((len(ds), C))
    labels = np.zeros(len(ds), dtype=np.int64)
    seen = np.zeros(len(ds), dtype=np.int64)
    times = []
    for train_idx, test_idx in plan.splits():
        start = time.perf_counter()
        model = learner.fit(ds.subset(train_idx))
        times.append(time.perf_counter() - start)
        Xt = ds.X[test_idx]
        p = model.predict_proba(Xt)
        proba[test_idx] = p
        labels[test_idx] = model.predict_labels(Xt) if hasattr(model, "predict_labels") else np.argmax(p, axis=1)
        seen[test_idx] += 1
    if not np.all(seen == 1):
        raise AssertionError("folds do not partition the dataset")
    cm = confusion(ds.y, labels, ds.schema.class_values)
    return metrics(cm, proba, ds.y, float(np.mean(times)), f"{plan.k}-fold cross-validation (seed {plan.seed})")


@dataclass(frozen=True, eq=False)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    def to_csv(self) -> str:
        lines = ["fpr,tpr,threshold"]
        for a, b, t in zip(self.fpr, self.tpr, self.thresholds):
            lines.append(f"{float(a)!r},{float(b)!r},{float(t)!r}")
        return "\n".join(lines) + "\n"


def roc_points(scores, is_positive) -> RocCurve:
    """Threshold sweep over distinct scores, highest first; ties form one step."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    pos = np.asarray(is_positive, dtype=bool).reshape(-1)
    P = int(pos.sum())
    N = int(pos.size - P)
    if P == 0 or N == 0:
        raise ValueError("ROC needs at least one positive and one negative instance")
    order = np.argsort(-s, kind="stable")
    s, pos = s[order], pos[order]
    last = np.r_[np.flatnonzero(s[1:] != s[:-1]), s.size - 1]
    tps = np.cumsum(pos)[last]
    fps = (last + 1) - tps
    tpr = np.r_[0.0, tps / P]
    fpr = np.r_[0.0, fps / N]
    thresholds = np.r_[np.inf, s[last]]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(fpr, tpr, thresholds, auc)
