"""Acceptance checks, one criterion per marker.

Checks that need the real NSL-KDD training file read it from ``NIDS_NSLKDD``
and skip without it; the terminal summary then lists them as NOT RUN.
"""
import csv
import importlib
import io
import itertools
import time

import numpy as np
import pytest

from nids import bayes_net as bn
from nids.cli import main
from nids.dataset import load_dataset, sample_fraction, stratified_folds
from nids.discretize import Method
from nids.ensemble import CombinedLearner, evaluate_combined
from nids.evaluation import cross_validate, roc_points
from nids.featsel import info_gain_rank, project, wrapper_search
from nids.learners import (
    DiscretizedNBLearner,
    FilterLearner,
    NaiveBayesLearner,
    RandomForestLearner,
    RandomTreeLearner,
)
from nids.modelio import dumps, loads
from nids.naive_bayes import train_nb
from nids.trees import ForestConfig, TreeConfig

from oracles import joint_enumeration, pair_auc
from synthetic import write_nsl_kdd_csv
from test_bayes_net import random_model
from test_modelio import LEARNERS
from toy import nominal_ds

pytestmark = pytest.mark.acceptance

SEED = 0
FOLDS = 10


@pytest.fixture(scope="module")
def nsl(nslkdd_path):
    return load_dataset(nslkdd_path, "binary")


@pytest.fixture(scope="module")
def plan(nsl):
    return stratified_folds(nsl, FOLDS, SEED)


@pytest.fixture(scope="module")
def tree_reports(nsl, plan):
    # shared by criteria 3 and 7: same folds for every learner
    out = {}
    for name, learner in (
        ("nb", NaiveBayesLearner()),
        ("rtree", RandomTreeLearner(TreeConfig(seed=SEED))),
        ("rforest", RandomForestLearner(ForestConfig(tree_count=100, seed=SEED))),
    ):
        t = time.perf_counter()
        out[name] = cross_validate(learner, nsl, plan=plan)
        out[name + "_seconds"] = time.perf_counter() - t
    return out


# --- 1 ------------------------------------------------------------------------


@pytest.mark.nslkdd
@pytest.mark.criterion_1
def test_naive_bayes_cv(nsl, plan, note):
    assert len(nsl) == 125_973
    t = time.perf_counter()
    r = cross_validate(NaiveBayesLearner(), nsl, plan=plan)
    elapsed = time.perf_counter() - t
    note(f"nb accuracy {100 * r.accuracy:.2f}%, rmse {r.rmse:.4f}, {elapsed:.1f}s")
    assert abs(100 * r.accuracy - 90.38) <= 1.5
    assert abs(r.rmse - 0.3058) <= 0.04
    assert elapsed < 120


# --- 2 ------------------------------------------------------------------------


@pytest.mark.nslkdd
@pytest.mark.criterion_2
def test_discretized_naive_bayes_cv(nsl, plan, note):
    acc = {}
    for m in Method:
        acc[m.value] = cross_validate(DiscretizedNBLearner(m, 10), nsl, plan=plan).accuracy
    best = max(acc, key=acc.get)
    note("nb-disc " + ", ".join(f"{k} {100 * v:.2f}%" for k, v in acc.items()) + f"; best {best}")
    assert abs(100 * acc[best] - 97.13) <= 1.5


# --- 3 ------------------------------------------------------------------------


@pytest.mark.nslkdd
@pytest.mark.criterion_3
def test_random_tree_and_forest_cv(tree_reports, note):
    rt, rf = tree_reports["rtree"], tree_reports["rforest"]
    note(f"rtree {100 * rt.accuracy:.2f}%, rforest {100 * rf.accuracy:.2f}% "
         f"(forest CV {tree_reports['rforest_seconds']:.0f}s)")
    assert rt.accuracy >= 0.993
    assert rf.accuracy >= 0.997
    assert rf.accuracy >= rt.accuracy
    assert tree_reports["rforest_seconds"] < 30 * 60


# --- 4 ------------------------------------------------------------------------


@pytest.mark.nslkdd
@pytest.mark.criterion_4
def test_wrapper_selection(nsl, note):
    subset = wrapper_search(nsl, NaiveBayesLearner(), folds=5, seed=SEED, max_features=5)
    r = cross_validate(NaiveBayesLearner(), project(nsl, subset.indices), FOLDS, SEED)
    note(f"wrapper subset {list(subset.indices)}: {100 * r.accuracy:.2f}%")
    assert len(subset.indices) <= 5
    assert r.accuracy >= 0.95


@pytest.mark.nslkdd
@pytest.mark.criterion_4
def test_filter_selection(nsl, plan, note):
    # drop the lowest-ranked features one at a time; ranking is refit inside each fold
    best_n, best = None, -1.0
    for n in range(nsl.schema.n_features, 0, -1):
        acc = cross_validate(FilterLearner(NaiveBayesLearner(), n), nsl, plan=plan).accuracy
        if acc > best:
            best_n, best = n, acc
    top = info_gain_rank(nsl).top(best_n)
    note(f"filter best top-{best_n} {100 * best:.2f}% (full-data ranking head {top[:5]})")
    assert best >= 0.90


# --- 5 ------------------------------------------------------------------------


@pytest.mark.nslkdd
@pytest.mark.criterion_5
def test_combined_resubstitution_full(nsl, note):
    model = CombinedLearner(seed=SEED).fit(nsl)
    ev = evaluate_combined(model, nsl, mode="resubstitution")
    r = ev.report
    members = ", ".join(f"{k} {100 * v.accuracy:.2f}%/{v.rmse:.4f}" for k, v in ev.member_reports.items())
    note(f"combined resubstitution {100 * r.accuracy:.3f}%, rmse {r.rmse:.4f} (members: {members})")
    assert r.accuracy >= 0.999
    assert r.rmse <= 0.02


@pytest.mark.nslkdd
@pytest.mark.criterion_5
def test_combined_resubstitution_sample(nsl, note):
    sample = sample_fraction(nsl, 0.2, SEED)
    model = CombinedLearner(seed=SEED).fit(sample)
    r = evaluate_combined(model, sample, mode="resubstitution").report
    note(f"combined 20% sample ({len(sample)} records) {100 * r.accuracy:.2f}%, "
         f"{r.confusion.total - r.confusion.correct} wrong")
    assert r.accuracy >= 0.995


@pytest.mark.nslkdd
@pytest.mark.criterion_5
def test_combined_cross_validation(nsl, plan, note):
    r = cross_validate(CombinedLearner(seed=SEED), nsl, plan=plan)
    note(f"combined 10-fold CV {100 * r.accuracy:.2f}%")
    assert r.accuracy >= 0.995


# --- 6 ------------------------------------------------------------------------


@pytest.mark.criterion_6
def test_junction_tree_equals_enumeration(note):
    rng = np.random.default_rng(2024)
    worst, patterns = 0.0, 0
    for _ in range(200):
        n = int(rng.integers(2, 7))
        model = random_model(rng, n)
        jt = bn.build_junction_tree(model.structure).with_potentials(model)
        c = n - 1
        cards = [2] * n
        # every observed/unobserved pattern and every value of the observed nodes
        for ev in itertools.product((None, 0, 1), repeat=n - 1):
            evidence = list(ev) + [None]
            want, _ = joint_enumeration(model.structure.parents, model.cpts, cards, evidence, c)
            got = bn.query_class_marginal(model, jt, evidence)
            worst = max(worst, float(np.max(np.abs(got - np.asarray(want)))))
            patterns += 1
    note(f"{patterns} evidence patterns, max abs error {worst:.2e}")
    assert worst <= 1e-9


@pytest.mark.criterion_6
def test_naive_structure_equals_naive_bayes(note):
    rng = np.random.default_rng(7)
    cards = [2, 3, 4, 5, 3]
    y = rng.integers(0, 2, 400)
    train = np.column_stack([(rng.integers(0, c, 400) * (rng.random(400) < 0.6) + y) % c for c in cards])
    ds = nominal_ds(train, y, cards)
    model = bn.fit_cpts(ds, bn.NetworkStructure.naive(len(cards)), 1.0)
    jt = bn.build_junction_tree(model.structure).with_potentials(model)
    nb_model = train_nb(ds, smoothing=1.0)
    records = np.column_stack([rng.integers(0, c, 1000) for c in cards])
    want = nb_model.predict_proba(records)
    one_by_one = np.array([bn.predict_bn(model, jt, r) for r in records])
    worst = max(np.max(np.abs(one_by_one - want)), np.max(np.abs(model.predict_proba(records) - want)))
    note(f"1000 records, max abs difference {worst:.2e}")
    assert worst <= 1e-9


# --- 7 ------------------------------------------------------------------------


@pytest.mark.criterion_7
def test_sweep_auc_equals_pair_auc(note):
    rng = np.random.default_rng(11)
    worst, done = 0.0, 0
    while done < 500:
        m = int(rng.integers(2, 21))
        # coarse grid so that tied scores are common
        scores = np.round(rng.random(m), int(rng.integers(1, 3)))
        pos = rng.random(m) < 0.5
        if pos.all() or not pos.any():
            continue
        worst = max(worst, abs(roc_points(scores, pos).auc - pair_auc(scores.tolist(), pos.tolist())))
        done += 1
    note(f"500 score sets, max abs difference {worst:.2e}")
    assert worst <= 1e-12


@pytest.mark.nslkdd
@pytest.mark.criterion_7
def test_roc_ordering_on_nsl_kdd(nsl, tree_reports, tmp_path, note):
    k = nsl.schema.class_values.index("anomaly")
    auc = {}
    for name in ("nb", "rtree", "rforest"):
        rep = tree_reports[name]
        curve = roc_points(rep.probabilities[:, k], rep.actual == k)
        path = tmp_path / f"roc_{name}.csv"
        path.write_text(curve.to_csv())
        lines = path.read_text().splitlines()
        assert lines[0] == "fpr,tpr,threshold" and len(lines) >= 3
        auc[name] = curve.auc
    note("AUC " + ", ".join(f"{k} {v:.4f}" for k, v in auc.items()))
    assert auc["rforest"] >= auc["nb"]
    assert auc["rtree"] >= auc["nb"]


# --- 8 ------------------------------------------------------------------------


def _run(*argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


def _strip_timing(text):
    rows = list(csv.reader(io.StringIO(text)))
    keep = [i for i, h in enumerate(rows[0]) if not h.endswith("_nondeterministic")]
    return [[r[i] for i in keep] for r in rows]


@pytest.mark.criterion_8
@pytest.mark.parametrize("algo", ["nb", "nb-disc", "k2bn", "rtree", "rforest", "combined"])
def test_commands_rerun_identically(algo, tmp_path):
    data = tmp_path / "d.csv"
    write_nsl_kdd_csv(data, 400, seed=21)
    outputs = []
    for run in ("a", "b"):
        model, cv = tmp_path / f"{run}.model", tmp_path / f"{run}.csv"
        roc = tmp_path / f"{run}.roc"
        assert _run("train", "--algo", algo, "--data", data, "--model", model, "--trees", 10, "--seed", 5) == 0
        assert _run("crossval", "--algo", algo, "--data", data, "--folds", 4, "--trees", 10, "--seed", 5,
                    "--out", cv, "--roc", roc) == 0
        outputs.append((model.read_bytes(), _strip_timing(cv.read_text()), roc.read_bytes()))
    assert outputs[0] == outputs[1]


@pytest.mark.criterion_8
@pytest.mark.parametrize("name", sorted(LEARNERS))
def test_round_trip_preserves_predictions(name):
    from synthetic import synthetic_dataset

    ds = synthetic_dataset(500, seed=22)
    model = LEARNERS[name].fit(ds)
    back = loads(dumps(model, name, ds.schema, 0, {})).model
    assert np.array_equal(model.predict_proba(ds.X), back.predict_proba(ds.X))
    if hasattr(model, "predict_labels"):
        assert np.array_equal(model.predict_labels(ds.X), back.predict_labels(ds.X))


# --- 9 ------------------------------------------------------------------------

PROPERTIES = [
    ("test_dataset", "test_fold_stratification_bounds"),
    ("test_dataset", "test_sample_proportions"),
    ("test_discretize", "test_binning_is_monotone"),
    ("test_discretize", "test_every_mdl_cut_passes_its_own_test"),
    ("test_naive_bayes", "test_posteriors_normalized_and_argmax_consistent"),
    ("test_naive_bayes", "test_smoothing_keeps_nominal_probabilities_positive"),
    ("test_naive_bayes", "test_duplicating_records_changes_nothing"),
    ("test_bayes_net", "test_k2_score_matches_enumeration"),
    ("test_bayes_net", "test_k2_search_structure_properties"),
    ("test_bayes_net", "test_cpts_normalized"),
    ("test_bayes_net", "test_running_intersection_on_random_structures"),
    ("test_trees", "test_best_split_matches_brute_force"),
    ("test_trees", "test_tree_invariants"),
    ("test_trees", "test_resubstitution_is_perfect_without_contradictions"),
    ("test_featsel", "test_rank_scores_bounded"),
    ("test_evaluation", "test_weighted_tp_rate_equals_accuracy"),
    ("test_ensemble", "test_fusion_properties"),
]


@pytest.mark.criterion_9
@pytest.mark.parametrize("module,func", PROPERTIES, ids=[f for _, f in PROPERTIES])
def test_property_suite(module, func):
    getattr(importlib.import_module(module), func)()
