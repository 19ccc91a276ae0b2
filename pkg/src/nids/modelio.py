"""Versioned, self-describing text model files.

Layout::

    # nids model
    format_version=1
    algorithm=rforest
    schema_fingerprint=<sha256>
    seed=7
    config={...}
    [schema]
    {...json...}
    [payload]
    {...json...}

Floats are written with ``repr`` precision, so a save/load round-trip
reproduces every parameter bit for bit.
"""
from __future__ import annotations

import json

import numpy as np

from . import bayes_net as bn
from .dataset import Feature, FeatureSchema, SchemaError, atomic_write_text
from .discretize import Discretizer, Method
from .ensemble import CombinedModel, FusionRule
from .learners import BayesNetClassifier, DiscretizedModel, ProjectedModel, TreeModel
from .naive_bayes import NBModel
from .trees import ForestConfig, ForestModel, TreeNode

FORMAT_VERSION = 1
MAGIC = "# nids model"


class ModelFileError(ValueError):
    """Unreadable, incompatible or mismatched model file."""


# --- schema -------------------------------------------------------------------


def schema_to_dict(schema: FeatureSchema) -> dict:
    return {
        "features": [[f.name, f.kind, list(f.values)] for f in schema.features],
        "class_values": list(schema.class_values),
        "has_difficulty_column": schema.has_difficulty_column,
    }


def schema_from_dict(d: dict) -> FeatureSchema:
    return FeatureSchema(
        tuple(Feature(name, kind, tuple(values)) for name, kind, values in d["features"]),
        tuple(d["class_values"]),
        bool(d["has_difficulty_column"]),
    )


# --- components ---------------------------------------------------------------


def _arr(a) -> list:
    return np.asarray(a).tolist()


def discretizer_to_dict(disc: Discretizer) -> dict:
    return {
        "method": disc.method.value,
        "bin_count": disc.bin_count,
        "features": [[j, disc.feature_names[j], _arr(disc.cuts[j])] for j in sorted(disc.cuts)],
    }


def discretizer_from_dict(d: dict) -> Discretizer:
    cuts = {int(j): np.array(c, dtype=np.float64) for j, _, c in d["features"]}
    names = {int(j): name for j, name, _ in d["features"]}
    return Discretizer(cuts, Method(d["method"]), int(d["bin_count"]), names)


def nb_to_dict(m: NBModel) -> dict:
    return {
        "schema": schema_to_dict(m.schema),
        "class_priors": _arr(m.class_priors),
        "nominal_tables": [[j, _arr(t)] for j, t in sorted(m.nominal_tables.items())],
        "numeric_params": [[j, _arr(mu), _arr(sd)] for j, (mu, sd) in sorted(m.numeric_params.items())],
        "smoothing": m.smoothing,
        "sigma_floor": m.sigma_floor,
    }


def nb_from_dict(d: dict) -> NBModel:
    return NBModel(
        schema_from_dict(d["schema"]),
        np.array(d["class_priors"]),
        {int(j): np.array(t) for j, t in d["nominal_tables"]},
        {int(j): (np.array(mu), np.array(sd)) for j, mu, sd in d["numeric_params"]},
        float(d["smoothing"]),
        float(d["sigma_floor"]),
    )


def tree_to_dict(root: TreeNode) -> dict:
    """Preorder node list; children are given as offsets into that list (-1 when empty)."""
    order = list(root.iter_nodes())
    pos = {id(n): i for i, n in enumerate(order)}
    nodes = []
    for n in order:
        children = [pos[id(c)] if c is not None else -1 for c in n.children]
        nodes.append([n.feature, n.threshold, _arr(n.counts), children])
    return {"nodes": nodes}


def tree_from_dict(d: dict) -> TreeNode:
    built = [TreeNode(np.array(c, dtype=np.float64), int(f), None if t is None else float(t))
             for f, t, c, _ in d["nodes"]]
    for node, (_, _, _, children) in zip(built, d["nodes"]):
        node.children = [built[i] if i >= 0 else None for i in children]
    return built[0]


def forest_to_dict(m: ForestModel) -> dict:
    c = m.config
    return {
        "config": {
            "tree_count": c.tree_count, "bag_fraction": c.bag_fraction, "r_features": c.r_features,
            "seed": c.seed, "with_replacement": c.with_replacement, "min_leaf": c.min_leaf,
            "max_depth": c.max_depth,
        },
        "class_values": list(m.class_values),
        "trees": [tree_to_dict(t) for t in m.trees],
    }


def forest_from_dict(d: dict) -> ForestModel:
    return ForestModel(
        tuple(tree_from_dict(t) for t in d["trees"]),
        ForestConfig(**d["config"]),
        tuple(d["class_values"]),
    )


def bn_to_dict(m: BayesNetClassifier) -> dict:
    model = m.model
    s = model.structure
    return {
        "discretizer": discretizer_to_dict(m.discretizer),
        "schema": schema_to_dict(model.schema),
        "ordering": list(s.ordering),
        "parents": [list(p) for p in s.parents],
        "cardinalities": _arr(model.cardinalities),
        "alpha": model.alpha,
        "cpts": [{"shape": list(t.shape), "values": _arr(t.reshape(-1))} for t in model.cpts],
    }


def bn_from_dict(d: dict) -> BayesNetClassifier:
    parents = tuple(tuple(p) for p in d["parents"])
    structure = bn.NetworkStructure(len(parents), tuple(d["ordering"]), parents)
    cpts = tuple(np.array(t["values"], dtype=np.float64).reshape(t["shape"]) for t in d["cpts"])
    model = bn.BayesNetModel(
        structure, cpts, np.array(d["cardinalities"], dtype=np.int64), float(d["alpha"]),
        schema_from_dict(d["schema"]),
    )
    return BayesNetClassifier(discretizer_from_dict(d["discretizer"]), model, bn.build_junction_tree(structure))


def model_to_dict(model) -> dict:
    if isinstance(model, NBModel):
        return {"type": "nb", **nb_to_dict(model)}
    if isinstance(model, DiscretizedModel):
        return {"type": "discretized", "discretizer": discretizer_to_dict(model.discretizer),
                "inner": model_to_dict(model.inner)}
    if isinstance(model, BayesNetClassifier):
        return {"type": "bayes_net", **bn_to_dict(model)}
    if isinstance(model, TreeModel):
        return {"type": "tree", "class_values": list(model.class_values), **tree_to_dict(model.root)}
    if isinstance(model, ForestModel):
        return {"type": "forest", **forest_to_dict(model)}
    if isinstance(model, ProjectedModel):
        return {"type": "projected", "indices": list(model.indices), "inner": model_to_dict(model.inner)}
    if isinstance(model, CombinedModel):
        return {
            "type": "combined",
            "fusion_rule": model.fusion_rule.value,
            "class_values": list(model.class_values),
            "bayes_net": bn_to_dict(model.bn),
            "random_tree": tree_to_dict(model.rtree),
            "random_forest": forest_to_dict(model.rforest),
        }
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_dict(d: dict):
    kind = d["type"]
    if kind == "nb":
        return nb_from_dict(d)
    if kind == "discretized":
        return DiscretizedModel(discretizer_from_dict(d["discretizer"]), model_from_dict(d["inner"]))
    if kind == "bayes_net":
        return bn_from_dict(d)
    if kind == "tree":
        return TreeModel(tree_from_dict(d), tuple(d["class_values"]))
    if kind == "forest":
        return forest_from_dict(d)
    if kind == "projected":
        return ProjectedModel(tuple(d["indices"]), model_from_dict(d["inner"]))
    if kind == "combined":
        return CombinedModel(
            bn_from_dict(d["bayes_net"]),
            tree_from_dict(d["random_tree"]),
            forest_from_dict(d["random_forest"]),
            FusionRule(d["fusion_rule"]),
            tuple(d["class_values"]),
        )
    raise ModelFileError(f"unknown model payload type {kind!r}")


# --- envelope -----------------------------------------------------------------


def dumps(model, algorithm: str, schema: FeatureSchema, seed: int, config: dict) -> str:
    lines = [
        MAGIC,
        f"format_version={FORMAT_VERSION}",
        f"algorithm={algorithm}",
        f"schema_fingerprint={schema.fingerprint()}",
        f"seed={int(seed)}",
        f"config={json.dumps(config, sort_keys=True)}",
        "[schema]",
        json.dumps(schema_to_dict(schema)),
        "[payload]",
        json.dumps(model_to_dict(model)),
    ]
    return "\n".join(lines) + "\n"


class ModelFile:
    def __init__(self, header: dict, schema: FeatureSchema, model):
        self.header = header
        self.schema = schema
        self.model = model

    @property
    def algorithm(self) -> str:
        return self.header["algorithm"]

    @property
    def seed(self) -> int:
        return int(self.header["seed"])

    @property
    def config(self) -> dict:
        return json.loads(self.header.get("config", "{}"))

    def check_schema(self, schema: FeatureSchema) -> None:
        if schema.fingerprint() != self.header["schema_fingerprint"]:
            raise SchemaError("data schema fingerprint does not match the model file")


def loads(text: str) -> ModelFile:
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise ModelFileError("not a nids model file")
    header, sections, current = {}, {}, None
    for line in lines[1:]:
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = []
        elif current is None:
            if "=" not in line:
                raise ModelFileError(f"malformed header line {line!r}")
            key, value = line.split("=", 1)
            header[key.strip()] = value
        else:
            sections[current].append(line)
    try:
        version = int(header.get("format_version", "-1"))
    except ValueError:
        version = -1
    if version != FORMAT_VERSION:
        raise ModelFileError(f"unsupported model format version {header.get('format_version')!r}")
    for key in ("algorithm", "schema_fingerprint", "seed"):
        if key not in header:
            raise ModelFileError(f"model file header lacks {key!r}")
    try:
        schema = schema_from_dict(json.loads("\n".join(sections["schema"])))
        payload = json.loads("\n".join(sections["payload"]))
    except (KeyError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"corrupt model file: {exc}") from None
    if schema.fingerprint() != header["schema_fingerprint"]:
        raise ModelFileError("embedded schema does not match its fingerprint")
    return ModelFile(header, schema, model_from_dict(payload))


def save_model(path, model, algorithm: str, schema: FeatureSchema, seed: int, config: dict) -> None:
    atomic_write_text(path, dumps(model, algorithm, schema, seed, config))


def load_model(path) -> ModelFile:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ModelFileError(f"cannot read model file {path}: {exc}") from exc
    return loads(text)
