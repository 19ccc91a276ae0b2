"""NSL-KDD-shaped synthetic records for pipeline and scale tests.

The values follow the real schema (41 features, nominal protocol/service/flag,
raw attack names as labels) but the distributions are invented; nothing
measured on this data says anything about NSL-KDD accuracy.
"""
from __future__ import annotations

import numpy as np

from nids.dataset import (
    FLAGS,
    NSL_KDD_FEATURE_NAMES,
    SERVICES,
    Dataset,
    nsl_kdd_schema,
)

# (label, weight, protocol probabilities, preferred services, preferred flags)
PROFILES = [
    ("normal", 0.53, (0.8, 0.15, 0.05), ("http", "smtp", "ftp_data", "domain_u", "private"), ("SF",)),
    ("neptune", 0.25, (1.0, 0.0, 0.0), ("private", "other", "telnet", "http"), ("S0", "REJ")),
    ("smurf", 0.04, (0.0, 0.0, 1.0), ("ecr_i",), ("SF",)),
    ("satan", 0.04, (0.7, 0.2, 0.1), ("private", "other", "eco_i"), ("REJ", "RSTO", "SF")),
    ("ipsweep", 0.03, (0.05, 0.0, 0.95), ("eco_i", "ecr_i"), ("SF",)),
    ("portsweep", 0.03, (0.95, 0.0, 0.05), ("private", "other"), ("RSTR", "REJ", "SH")),
    ("back", 0.03, (1.0, 0.0, 0.0), ("http",), ("SF", "RSTR")),
    ("guess_passwd", 0.02, (1.0, 0.0, 0.0), ("telnet",), ("SF", "RSTO")),
    ("buffer_overflow", 0.03, (1.0, 0.0, 0.0), ("telnet", "ftp_data"), ("SF",)),
]


def _pick(rng, names, universe, n, focus=0.9):
    idx = np.array([universe.index(s) for s in names])
    out = rng.integers(0, len(universe), size=n)
    focused = rng.random(n) < focus
    out[focused] = idx[rng.integers(0, idx.size, size=focused.sum())]
    return out


def synthetic_nsl_kdd(n: int, seed: int = 0, label_noise: float = 0.001):
    """Return ``(X, raw_labels)`` shaped like the NSL-KDD training file."""
    rng = np.random.default_rng(seed)
    weights = np.array([p[1] for p in PROFILES])
    kinds = rng.choice(len(PROFILES), size=n, p=weights / weights.sum())
    d = len(NSL_KDD_FEATURE_NAMES)
    X = np.zeros((n, d))
    col = {name: j for j, name in enumerate(NSL_KDD_FEATURE_NAMES)}
    for k, (label, _, proto, services, flags) in enumerate(PROFILES):
        rows = np.flatnonzero(kinds == k)
        m = rows.size
        if m == 0:
            continue
        attack = label != "normal"
        X[rows, col["protocol_type"]] = rng.choice(3, size=m, p=proto)
        X[rows, col["service"]] = _pick(rng, services, SERVICES, m)
        X[rows, col["flag"]] = _pick(rng, flags, FLAGS, m)
        X[rows, col["duration"]] = np.where(rng.random(m) < 0.9, 0, rng.integers(1, 5000, m))
        scale = 6.0 if not attack else (2.0 + k % 4)
        X[rows, col["src_bytes"]] = np.floor(np.exp(rng.normal(scale, 1.5, m)))
        X[rows, col["dst_bytes"]] = np.floor(np.exp(rng.normal(7.0 if not attack else 1.0 + k % 3, 2.0, m)))
        X[rows, col["logged_in"]] = rng.random(m) < (0.7 if not attack else 0.1 + 0.1 * (k % 5))
        X[rows, col["count"]] = rng.integers(1, 30 if not attack else 100 + 50 * (k % 5), m)
        X[rows, col["srv_count"]] = rng.integers(1, 40 if not attack else 20 + 30 * (k % 3), m)
        for name in ("serror_rate", "srv_serror_rate", "dst_host_serror_rate", "dst_host_srv_serror_rate"):
            base = 0.9 if label == "neptune" else 0.02
            X[rows, col[name]] = np.round(np.clip(rng.normal(base, 0.08, m), 0, 1), 2)
        for name in ("rerror_rate", "srv_rerror_rate", "dst_host_rerror_rate", "dst_host_srv_rerror_rate"):
            base = 0.6 if label in ("portsweep", "satan") else 0.03
            X[rows, col[name]] = np.round(np.clip(rng.normal(base, 0.15, m), 0, 1), 2)
        for name in ("same_srv_rate", "dst_host_same_srv_rate"):
            base = 0.95 if not attack else 0.1 + 0.15 * (k % 6)
            X[rows, col[name]] = np.round(np.clip(rng.normal(base, 0.1, m), 0, 1), 2)
        for name in ("diff_srv_rate", "dst_host_diff_srv_rate", "srv_diff_host_rate",
                     "dst_host_same_src_port_rate", "dst_host_srv_diff_host_rate"):
            base = 0.05 if not attack else 0.05 * (k % 7)
            X[rows, col[name]] = np.round(np.clip(rng.normal(base, 0.07, m), 0, 1), 2)
        X[rows, col["dst_host_count"]] = rng.integers(1, 256, m) if attack else rng.integers(100, 256, m)
        X[rows, col["dst_host_srv_count"]] = rng.integers(1, 256 if not attack else 40, m)
        X[rows, col["hot"]] = (rng.random(m) < (0.05 if label != "buffer_overflow" else 0.6)) * rng.integers(1, 6, m)
        X[rows, col["num_failed_logins"]] = (label == "guess_passwd") * (rng.random(m) < 0.5)
        X[rows, col["root_shell"]] = (label == "buffer_overflow") * (rng.random(m) < 0.5)
        X[rows, col["num_file_creations"]] = (rng.random(m) < 0.02) * rng.integers(1, 4, m)
        X[rows, col["wrong_fragment"]] = (label == "smurf") * (rng.random(m) < 0.05)
    labels = np.array([PROFILES[k][0] for k in kinds], dtype=object)
    flip = rng.random(n) < label_noise
    labels[flip & (labels == "normal")] = "neptune"
    labels[flip & (labels != "normal") & ~(flip & (labels == "neptune"))] = "normal"
    return X, labels


def synthetic_dataset(n: int, seed: int = 0, labels: str = "binary") -> Dataset:
    from nids.dataset import map_attack_category, CATEGORY_CLASSES

    X, raw = synthetic_nsl_kdd(n, seed)
    schema = nsl_kdd_schema(labels)
    if labels == "binary":
        y = (raw != "normal").astype(np.int64)
    else:
        y = np.array([CATEGORY_CLASSES.index(map_attack_category(r).value) for r in raw])
    return Dataset(schema, X, y)


def write_nsl_kdd_csv(path, n: int, seed: int = 0, difficulty: bool = True) -> None:
    X, raw = synthetic_nsl_kdd(n, seed)
    schema = nsl_kdd_schema()
    lines = []
    for row, label in zip(X, raw):
        fields = []
        for f, v in zip(schema.features, row):
            fields.append(f.values[int(v)] if f.is_nominal else (str(int(v)) if float(v).is_integer() else repr(float(v))))
        fields.append(label)
        if difficulty:
            fields.append("20")
        lines.append(",".join(fields))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
