"""Naive Bayes over mixed nominal/numeric features.

Nominal features use Laplace-smoothed frequency tables, numeric features a
per-class Gaussian. Everything is accumulated in log space.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, DataError, FeatureSchema, Record, SchemaError

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class NBModel:
    schema: FeatureSchema
    class_priors: np.ndarray
    nominal_tables: dict[int, np.ndarray]  # feature -> (n_classes, n_values)
    numeric_params: dict[int, tuple[np.ndarray, np.ndarray]]  # feature -> (means, stds)
    smoothing: float = 1.0
    sigma_floor: float = 1e-3

    def log_joint(self, X) -> np.ndarray:
        """Unnormalized log posteriors, shape ``(n_records, n_classes)``."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.schema.n_features:
            raise SchemaError(
                f"expected records with {self.schema.n_features} values, got shape {X.shape}"
            )
        with np.errstate(divide="ignore"):
            out = np.tile(np.log(self.class_priors), (X.shape[0], 1))
            for j, table in self.nominal_tables.items():
                idx = X[:, j].astype(np.int64)
                if idx.size and (idx.min() < 0 or idx.max() >= table.shape[1]):
                    raise SchemaError(f"nominal index out of range for feature {j}")
                out += np.log(table[:, idx]).T
        for j, (mu, sd) in self.numeric_params.items():
            z = (X[:, j, None] - mu) / sd
            out += -0.5 * z * z - np.log(sd) - LOG_SQRT_2PI
        return out

    def predict_proba(self, X) -> np.ndarray:
        return _softmax(self.log_joint(X))

    @property
    def n_classes(self) -> int:
        return self.class_priors.size


def _softmax(logp: np.ndarray) -> np.ndarray:
    top = np.max(logp, axis=1, keepdims=True)
    if not np.all(np.isfinite(top)):
        raise ValueError("record has zero probability under every class")
    p = np.exp(logp - top)
    return p / p.sum(axis=1, keepdims=True)


def train_nb(ds: Dataset, smoothing: float = 1.0, sigma_floor: float = 1e-3) -> NBModel:
    if len(ds) == 0:
        raise DataError("cannot train naive Bayes on an empty dataset")
    if smoothing < 0:
        raise ValueError("smoothing must be non-negative")
    C = ds.schema.n_classes
    n = len(ds)
    counts = ds.class_counts().astype(np.float64)
    priors = (counts + smoothing) / (n + smoothing * C)
    tables: dict[int, np.ndarray] = {}
    gaussians: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for j, feature in enumerate(ds.schema.features):
        col = ds.X[:, j]
        if feature.is_nominal:
            V = len(feature.values)
            joint = np.bincount(ds.y * V + col.astype(np.int64), minlength=C * V)
            joint = joint.reshape(C, V).astype(np.float64) + smoothing
            totals = joint.sum(axis=1, keepdims=True)
            with np.errstate(invalid="ignore", divide="ignore"):
                table = np.where(totals > 0, joint / totals, 1.0 / V)
            tables[j] = table
        else:
            mu = np.empty(C)
            sd = np.empty(C)
            for c in range(C):
                vals = col[ds.y == c]
                if vals.size == 0:
                    vals = col
                mu[c] = vals.mean()
                sd[c] = vals.std()
            gaussians[j] = (mu, np.maximum(sd, sigma_floor))
    return NBModel(ds.schema, priors, tables, gaussians, smoothing, sigma_floor)


def log_posterior(model: NBModel, record, class_index: int) -> float:
    """log P(class) + sum_k log P(x_k | class), unnormalized."""
    values = record.values if isinstance(record, Record) else record
    return float(model.log_joint(np.asarray(values, dtype=np.float64)[None, :])[0, class_index])


def predict_nb(model: NBModel, record) -> np.ndarray:
    values = record.values if isinstance(record, Record) else record
    return model.predict_proba(np.asarray(values, dtype=np.float64)[None, :])[0]
