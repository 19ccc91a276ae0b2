"""NSL-KDD ingestion, feature schema, attack taxonomy and data partitioning.

Records are stored column-wise in a float matrix: numeric features hold their
value, nominal features hold the index of their value in the schema's
value-set. Labels are class indices into ``schema.class_values``.
"""
from __future__ import annotations

import enum
import hashlib
import math
import os
import tempfile
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

NUMERIC = "numeric"
NOMINAL = "nominal"

BINARY_CLASSES = ("normal", "anomaly")
CATEGORY_CLASSES = ("normal", "dos", "probe", "r2l", "u2r")
LABEL_MODES = ("binary", "category5", "raw")


class DataError(ValueError):
    """Malformed or schema-incompatible input data."""


class SchemaError(DataError):
    """Dataset or record does not match the schema a model was built for."""


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str = NUMERIC
    values: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in (NUMERIC, NOMINAL):
            raise SchemaError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == NOMINAL:
            if not self.values:
                raise SchemaError(f"nominal feature {self.name!r} has an empty value-set")
            if len(set(self.values)) != len(self.values):
                raise SchemaError(f"nominal feature {self.name!r} has duplicate values")
        elif self.values:
            raise SchemaError(f"numeric feature {self.name!r} cannot carry a value-set")

    @property
    def is_nominal(self) -> bool:
        return self.kind == NOMINAL


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[Feature, ...]
    class_values: tuple[str, ...]
    has_difficulty_column: bool = False

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "class_values", tuple(self.class_values))
        if len(self.class_values) < 2:
            raise SchemaError("a schema needs at least two class values")
        if len(set(self.class_values)) != len(self.class_values):
            raise SchemaError("duplicate class values")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate feature names")

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def n_classes(self) -> int:
        return len(self.class_values)

    @property
    def nominal_mask(self) -> np.ndarray:
        return np.array([f.is_nominal for f in self.features], dtype=bool)

    @property
    def cardinalities(self) -> np.ndarray:
        """Value-set sizes (0 for numeric features)."""
        return np.array([len(f.values) for f in self.features], dtype=np.int64)

    def index_of(self, name: str) -> int:
        for i, f in enumerate(self.features):
            if f.name == name:
                return i
        raise KeyError(name)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for f in self.features:
            h.update(f"{f.name}\x1f{f.kind}\x1f{chr(0x1e).join(f.values)}\n".encode())
        h.update(("\x1d".join(self.class_values)).encode())
        return h.hexdigest()

    def with_class_values(self, class_values: Sequence[str]) -> "FeatureSchema":
        return FeatureSchema(self.features, tuple(class_values), self.has_difficulty_column)

    def select(self, indices: Sequence[int]) -> "FeatureSchema":
        return FeatureSchema(
            tuple(self.features[i] for i in indices),
            self.class_values,
            self.has_difficulty_column,
        )


class Record(NamedTuple):
    values: np.ndarray
    label: int


@dataclass(frozen=True, eq=False)
class Dataset:
    schema: FeatureSchema
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, copy=True, ndmin=2)
        y = np.array(self.y, dtype=np.int64, copy=True).reshape(-1)
        if X.size == 0:
            X = X.reshape(len(y), self.schema.n_features)
        if X.shape[1] != self.schema.n_features:
            raise SchemaError(
                f"records have {X.shape[1]} values, schema has {self.schema.n_features} features"
            )
        if X.shape[0] != y.shape[0]:
            raise DataError("feature matrix and label vector lengths differ")
        if y.size and (y.min() < 0 or y.max() >= self.schema.n_classes):
            raise SchemaError("label index outside the schema's class values")
        for j, f in enumerate(self.schema.features):
            col = X[:, j]
            if f.is_nominal:
                bad = (col < 0) | (col >= len(f.values)) | (col != np.floor(col))
                if bad.any():
                    i = int(np.argmax(bad))
                    raise SchemaError(
                        f"record {i}: nominal index {col[i]!r} invalid for feature {f.name!r}"
                    )
            elif not np.isfinite(col).all():
                raise DataError(f"non-finite value in numeric feature {f.name!r}")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.X.shape[0]

    def record(self, i: int) -> Record:
        return Record(self.X[i], int(self.y[i]))

    def records(self) -> Iterable[Record]:
        for i in range(len(self)):
            yield self.record(i)

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.schema, self.X[indices], self.y[indices])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.schema.n_classes)

    def require_nonempty(self) -> None:
        if len(self) == 0:
            raise DataError("dataset has no records")

    def equals(self, other: "Dataset") -> bool:
        return (
            self.schema == other.schema
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
        )


# --- canonical NSL-KDD schema -------------------------------------------------

NSL_KDD_FEATURE_NAMES = (
    "duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes",
    "land", "wrong_fragment", "urgent", "hot", "num_failed_logins", "logged_in",
    "num_compromised", "root_shell", "su_attempted", "num_root",
    "num_file_creations", "num_shells", "num_access_files", "num_outbound_cmds",
    "is_host_login", "is_guest_login", "count", "srv_count", "serror_rate",
    "srv_serror_rate", "rerror_rate", "srv_rerror_rate", "same_srv_rate",
    "diff_srv_rate", "srv_diff_host_rate", "dst_host_count",
    "dst_host_srv_count", "dst_host_same_srv_rate", "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate", "dst_host_srv_diff_host_rate",
    "dst_host_serror_rate", "dst_host_srv_serror_rate", "dst_host_rerror_rate",
    "dst_host_srv_rerror_rate",
)

PROTOCOL_TYPES = ("tcp", "udp", "icmp")

SERVICES = (
    "aol", "auth", "bgp", "courier", "csnet_ns", "ctf", "daytime", "discard",
    "domain", "domain_u", "echo", "eco_i", "ecr_i", "efs", "exec", "finger",
    "ftp", "ftp_data", "gopher", "harvest", "hostnames", "http", "http_2784",
    "http_443", "http_8001", "imap4", "IRC", "iso_tsap", "klogin", "kshell",
    "ldap", "link", "login", "mtp", "name", "netbios_dgm", "netbios_ns",
    "netbios_ssn", "netstat", "nnsp", "nntp", "ntp_u", "other", "pm_dump",
    "pop_2", "pop_3", "printer", "private", "red_i", "remote_job", "rje",
    "shell", "smtp", "sql_net", "ssh", "sunrpc", "supdup", "systat", "telnet",
    "tftp_u", "tim_i", "time", "urh_i", "urp_i", "uucp", "uucp_path", "vmnet",
    "whois", "X11", "Z39_50",
)

FLAGS = ("OTH", "REJ", "RSTO", "RSTOS0", "RSTR", "S0", "S1", "S2", "S3", "SF", "SH")

_NOMINAL_VALUES = {
    "protocol_type": PROTOCOL_TYPES,
    "service": SERVICES,
    "flag": FLAGS,
}


def class_values_for(labels: str) -> tuple[str, ...]:
    if labels == "binary":
        return BINARY_CLASSES
    if labels == "category5":
        return CATEGORY_CLASSES
    raise ValueError(f"no fixed class set for label mode {labels!r}")


def nsl_kdd_schema(labels: str = "binary") -> FeatureSchema:
    """The 41-feature NSL-KDD schema with the class set of a label mode."""
    features = tuple(
        Feature(name, NOMINAL, _NOMINAL_VALUES[name]) if name in _NOMINAL_VALUES else Feature(name)
        for name in NSL_KDD_FEATURE_NAMES
    )
    return FeatureSchema(features, class_values_for(labels), has_difficulty_column=True)


# --- attack taxonomy ----------------------------------------------------------


class AttackCategory(enum.Enum):
    NORMAL = "normal"
    DOS = "dos"
    PROBE = "probe"
    R2L = "r2l"
    U2R = "u2r"


_TAXONOMY_TABLE = {
    AttackCategory.DOS: (
        "apache2 smurf neptune dosnuke land pod back teardrop tcprset syslogd "
        "crashiis arppoison mailbomb selfping processtable udpstorm warezclient"
    ),
    AttackCategory.PROBE: (
        "portsweep ipsweep queso satan msscan ntinfoscan lsdomain illegal-sniffer"
    ),
    AttackCategory.R2L: (
        "dict netcat sendmail imap ncftp xlock xsnoop sshotrojan framespooof "
        "pppmacro guest netbus snmpget ftpwrite httptunnel phf named"
    ),
    AttackCategory.U2R: (
        "sechole xterm eject ps nukewp secret perl yaga fdformat ffbconfig "
        "casesen ntfdsdos loadmodule sqlattack"
    ),
}

# Attack names that occur in the NSL-KDD files but not in the table above.
_NSL_KDD_EXTRA = {
    AttackCategory.DOS: "worm",
    AttackCategory.PROBE: "nmap mscan saint",
    AttackCategory.R2L: (
        "guess_passwd ftp_write multihop warezmaster spy snmpguess snmpgetattack"
    ),
    AttackCategory.U2R: "buffer_overflow rootkit",
}


def _build_taxonomy() -> dict[str, AttackCategory]:
    table = {"normal": AttackCategory.NORMAL}
    for source in (_TAXONOMY_TABLE, _NSL_KDD_EXTRA):
        for category, names in source.items():
            for name in names.split():
                if name in table and table[name] is not category:
                    raise AssertionError(f"{name} listed under two categories")
                table[name] = category
    return table


ATTACK_TAXONOMY: dict[str, AttackCategory] = _build_taxonomy()


def _normalize_label(raw: str) -> str:
    return raw.strip().strip("'\"").rstrip(".").lower()


def map_attack_category(raw_label: str) -> AttackCategory:
    """Category of a raw NSL-KDD label; unknown labels raise ``KeyError``."""
    name = _normalize_label(raw_label)
    try:
        return ATTACK_TAXONOMY[name]
    except KeyError:
        raise KeyError(f"unknown attack label {raw_label!r}") from None


def _label_resolver(labels: str, class_values: Sequence[str]):
    if labels == "binary":
        return lambda raw: 0 if _normalize_label(raw) == "normal" else 1
    if labels == "category5":
        order = {c: i for i, c in enumerate(CATEGORY_CLASSES)}
        return lambda raw: order[map_attack_category(raw).value]
    if labels == "raw":
        lookup = {c: i for i, c in enumerate(class_values)}
        return lambda raw: lookup[raw.strip().strip("'\"")]
    raise ValueError(f"unknown label mode {labels!r}")


# --- parsing ------------------------------------------------------------------


def _parse_row(tokens, schema: FeatureSchema, lookups, lineno: int, out: np.ndarray):
    for j, (feature, tok) in enumerate(zip(schema.features, tokens)):
        tok = tok.strip()
        lookup = lookups[j]
        if lookup is not None:
            tok = tok.strip("'\"")
            try:
                out[j] = lookup[tok]
            except KeyError:
                raise DataError(
                    f"line {lineno}, column {j + 1} ({feature.name}): unknown nominal value {tok!r}"
                ) from None
        else:
            try:
                out[j] = float(tok)
            except ValueError:
                raise DataError(
                    f"line {lineno}, column {j + 1} ({feature.name}): non-numeric value {tok!r}"
                ) from None
            if not math.isfinite(out[j]):
                raise DataError(
                    f"line {lineno}, column {j + 1} ({feature.name}): non-finite value {tok!r}"
                )


def _value_lookups(schema: FeatureSchema):
    return [
        {v: i for i, v in enumerate(f.values)} if f.is_nominal else None
        for f in schema.features
    ]


def load_csv(path, schema: FeatureSchema | None = None, labels: str = "binary") -> Dataset:
    """Load an NSL-KDD style CSV file (no header, label after the features).

    Rows may carry a trailing difficulty score, which is dropped. With
    ``labels="binary"`` every label other than ``normal`` becomes ``anomaly``;
    ``"category5"`` maps raw attack names through the taxonomy; ``"raw"``
    requires labels to be members of ``schema.class_values``.
    """
    if schema is None:
        schema = nsl_kdd_schema(labels if labels != "raw" else "binary")
    if labels != "raw":
        schema = schema.with_class_values(class_values_for(labels))
    resolve = _label_resolver(labels, schema.class_values)
    lookups = _value_lookups(schema)
    d = schema.n_features
    rows: list[np.ndarray] = []
    ys: list[int] = []
    try:
        fh = open(path, "r", newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            tokens = line.split(",")
            if len(tokens) not in (d + 1, d + 2):
                raise DataError(
                    f"line {lineno}: expected {d + 1} or {d + 2} fields, found {len(tokens)}"
                )
            row = np.empty(d, dtype=np.float64)
            _parse_row(tokens, schema, lookups, lineno, row)
            try:
                ys.append(resolve(tokens[d]))
            except KeyError:
                raise DataError(f"line {lineno}: unknown class label {tokens[d].strip()!r}") from None
            rows.append(row)
    if not rows:
        raise DataError(f"{path}: no records")
    return Dataset(schema, np.vstack(rows), np.array(ys, dtype=np.int64))


def _format_value(feature: Feature, v: float) -> str:
    if feature.is_nominal:
        return feature.values[int(v)]
    if v.is_integer() and abs(v) < 2**53:
        return str(int(v))
    return repr(float(v))


def write_csv(ds: Dataset, path) -> None:
    """Write ``ds`` in the headerless CSV layout read by :func:`load_csv`."""
    feats = ds.schema.features
    lines = []
    for values, label in zip(ds.X, ds.y):
        fields = [_format_value(f, float(v)) for f, v in zip(feats, values)]
        fields.append(ds.schema.class_values[label])
        lines.append(",".join(fields))
    atomic_write_text(path, "\n".join(lines) + "\n")


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _split_arff_values(spec: str) -> tuple[str, ...]:
    body = spec.strip()
    if not (body.startswith("{") and body.endswith("}")):
        raise DataError(f"malformed nominal specification {spec!r}")
    values = tuple(v.strip().strip("'\"") for v in body[1:-1].split(","))
    if not all(values):
        raise DataError(f"empty nominal value in {spec!r}")
    return values


def _parse_attribute(line: str, lineno: int) -> Feature:
    rest = line.split(None, 1)[1] if len(line.split(None, 1)) > 1 else ""
    rest = rest.strip()
    if rest.startswith(("'", '"')):
        quote = rest[0]
        end = rest.find(quote, 1)
        if end < 0:
            raise DataError(f"line {lineno}: unterminated attribute name")
        name, kind = rest[1:end], rest[end + 1 :].strip()
    else:
        parts = rest.split(None, 1)
        if len(parts) != 2:
            raise DataError(f"line {lineno}: malformed @attribute declaration")
        name, kind = parts
    lowered = kind.lower()
    if kind.startswith("{"):
        try:
            return Feature(name, NOMINAL, _split_arff_values(kind))
        except SchemaError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
    if lowered in ("numeric", "real", "integer"):
        return Feature(name)
    raise DataError(f"line {lineno}: unsupported attribute kind {kind.split()[0]!r} for {name!r}")


def load_arff(path, labels: str = "raw") -> Dataset:
    """Load a dense ARFF file whose last attribute is the nominal class."""
    try:
        fh = open(path, "r", newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    attributes: list[Feature] = []
    seen_relation = False
    in_data = False
    rows: list[np.ndarray] = []
    raw_labels: list[tuple[int, str]] = []
    schema = lookups = None
    with fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            if not in_data:
                keyword = stripped.split(None, 1)[0].lower()
                if keyword == "@relation":
                    seen_relation = True
                elif keyword == "@attribute":
                    if not seen_relation:
                        raise DataError(f"line {lineno}: @attribute before @relation")
                    attributes.append(_parse_attribute(stripped, lineno))
                elif keyword == "@data":
                    if len(attributes) < 2:
                        raise DataError("ARFF header needs at least one feature and a class")
                    cls = attributes[-1]
                    if not cls.is_nominal:
                        raise DataError("the last (class) attribute must be nominal")
                    try:
                        schema = FeatureSchema(tuple(attributes[:-1]), cls.values)
                    except SchemaError as exc:
                        raise DataError(str(exc)) from None
                    lookups = _value_lookups(schema)
                    in_data = True
                else:
                    raise DataError(f"line {lineno}: unexpected header line {stripped[:40]!r}")
                continue
            tokens = stripped.split(",")
            if len(tokens) != len(attributes):
                raise DataError(
                    f"line {lineno}: expected {len(attributes)} values, found {len(tokens)}"
                )
            row = np.empty(schema.n_features, dtype=np.float64)
            _parse_row(tokens, schema, lookups, lineno, row)
            rows.append(row)
            raw_labels.append((lineno, tokens[-1].strip().strip("'\"")))
    if schema is None:
        raise DataError(f"{path}: missing @data section")
    if not rows:
        raise DataError(f"{path}: no records")
    class_set = set(schema.class_values)
    for lineno, lab in raw_labels:
        if lab not in class_set:
            raise DataError(f"line {lineno}: class value {lab!r} not declared in header")
    if labels != "raw":
        schema = schema.with_class_values(class_values_for(labels))
    resolve = _label_resolver(labels, schema.class_values)
    try:
        ys = np.array([resolve(lab) for _, lab in raw_labels], dtype=np.int64)
    except KeyError as exc:
        raise DataError(f"cannot map class label: {exc}") from None
    return Dataset(schema, np.vstack(rows), ys)


def load_dataset(path, labels: str = "binary") -> Dataset:
    """Dispatch on extension: ``.arff`` goes to :func:`load_arff`, anything else to CSV."""
    if os.fspath(path).lower().endswith(".arff"):
        return load_arff(path, labels=labels)
    return load_csv(path, labels=labels)


# --- partitioning -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FoldPlan:
    assignments: np.ndarray
    k: int
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def splits(self):
        for fold in range(self.k):
            yield self.train_indices(fold), self.test_indices(fold)


def stratified_folds(ds: Dataset, k: int, seed: int = 0) -> FoldPlan:
    """Shuffle each class with a seeded generator and deal it round-robin into k folds.

    The dealing position carries over from one class to the next, so overall
    fold sizes also differ by at most one.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > len(ds):
        raise ValueError(f"k={k} exceeds the record count {len(ds)}")
    rng = np.random.default_rng(seed)
    assignments = np.empty(len(ds), dtype=np.int64)
    start = 0
    for c in range(ds.schema.n_classes):
        members = np.flatnonzero(ds.y == c)
        if members.size == 0:
            continue
        members = members[rng.permutation(members.size)]
        assignments[members] = (start + np.arange(members.size)) % k
        start = (start + members.size) % k
    assignments.setflags(write=False)
    return FoldPlan(assignments, k, seed)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def sample_fraction(ds: Dataset, fraction: float, seed: int = 0, stratified: bool = True) -> Dataset:
    """Sample without replacement; selected records keep their original order."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    rng = np.random.default_rng(seed)
    if stratified:
        chosen = []
        for c in range(ds.schema.n_classes):
            members = np.flatnonzero(ds.y == c)
            take = _round_half_up(fraction * members.size)
            if take:
                chosen.append(rng.choice(members, size=take, replace=False))
        picked = np.concatenate(chosen) if chosen else np.empty(0, dtype=np.int64)
    else:
        picked = rng.choice(len(ds), size=_round_half_up(fraction * len(ds)), replace=False)
    if picked.size == 0:
        raise ValueError("sample would contain no records")
    return ds.subset(np.sort(picked))
