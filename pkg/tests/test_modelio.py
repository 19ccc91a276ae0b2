import numpy as np
import pytest

from nids.dataset import SchemaError
from nids.discretize import Method
from nids.ensemble import CombinedLearner, FusionRule
from nids.learners import (
    BayesNetLearner,
    DiscretizedNBLearner,
    FilterLearner,
    NaiveBayesLearner,
    RandomForestLearner,
    RandomTreeLearner,
)
from nids.modelio import ModelFileError, dumps, load_model, loads, save_model
from nids.trees import ForestConfig, TreeConfig

from synthetic import synthetic_dataset

LEARNERS = {
    "nb": NaiveBayesLearner(),
    "nb-disc": DiscretizedNBLearner(Method.EQUAL_FREQUENCY, 5),
    "nb-mdl": DiscretizedNBLearner(Method.ENTROPY_MDL),
    "k2bn": BayesNetLearner(bins=5),
    "k2bn-naive": BayesNetLearner(bins=5, structure="naive"),
    "rtree": RandomTreeLearner(TreeConfig(seed=3)),
    "rforest": RandomForestLearner(ForestConfig(tree_count=4, seed=3)),
    "filter": FilterLearner(NaiveBayesLearner(), 5),
    "combined": CombinedLearner(BayesNetLearner(bins=5), TreeConfig(), ForestConfig(tree_count=3), FusionRule.MAJORITY_VOTE, 1),
}


@pytest.fixture(scope="module")
def data():
    return synthetic_dataset(400, seed=12)


@pytest.mark.parametrize("name", sorted(LEARNERS))
def test_round_trip_predictions_identical(name, data, tmp_path):
    model = LEARNERS[name].fit(data)
    path = tmp_path / "m.model"
    save_model(path, model, name, data.schema, 3, {"bins": 5})
    mf = load_model(path)
    assert mf.algorithm == name and mf.seed == 3 and mf.config == {"bins": 5}
    assert np.array_equal(model.predict_proba(data.X), mf.model.predict_proba(data.X))
    # second generation is byte-identical
    assert dumps(mf.model, name, mf.schema, 3, {"bins": 5}) == path.read_text()


def test_combined_labels_survive(data):
    model = LEARNERS["combined"].fit(data)
    back = loads(dumps(model, "combined", data.schema, 1, {})).model
    assert back.fusion_rule is FusionRule.MAJORITY_VOTE
    assert np.array_equal(model.predict_labels(data.X), back.predict_labels(data.X))


def test_fingerprint_check(data):
    mf = loads(dumps(NaiveBayesLearner().fit(data), "nb", data.schema, 0, {}))
    mf.check_schema(data.schema)
    other = synthetic_dataset(50, seed=1, labels="category5")
    with pytest.raises(SchemaError):
        mf.check_schema(other.schema)


@pytest.fixture
def text(data):
    return dumps(NaiveBayesLearner().fit(data), "nb", data.schema, 0, {})


def test_wrong_version_rejected(text):
    with pytest.raises(ModelFileError):
        loads(text.replace("format_version=1", "format_version=2"))


@pytest.mark.parametrize(
    "mangle",
    [
        lambda t: "",
        lambda t: "hello\n" + t,
        lambda t: t.replace("[payload]", "[nothing]"),
        lambda t: t[: len(t) // 2],
        lambda t: t.replace("seed=0\n", ""),
        lambda t: t.replace('"type": "nb"', '"type": "svm"'),
        lambda t: t.replace("schema_fingerprint=", "schema_fingerprint=00"),
    ],
)
def test_corrupt_files_rejected(text, mangle):
    with pytest.raises(ModelFileError):
        loads(mangle(text))


def test_missing_file(tmp_path):
    with pytest.raises(ModelFileError):
        load_model(tmp_path / "absent.model")
