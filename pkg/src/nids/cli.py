"""Batch command line: ``nids <command> [options]``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 model/training error.
"""
from __future__ import annotations

import argparse
import hashlib
import io
import logging
import os
import sys
import time
import urllib.request


from . import __version__
from .bayes_net import InconsistentEvidence
from .dataset import DataError, SchemaError, atomic_write_text, load_dataset
from .discretize import Method
from .ensemble import CombinedLearner, CombinedModel, FusionRule, evaluate_combined
from .evaluation import EvalReport, cross_validate, evaluate_model, roc_points
from .featsel import info_gain_rank, project, wrapper_search
from .learners import (
    BayesNetLearner,
    DiscretizedNBLearner,
    FilterLearner,
    NaiveBayesLearner,
    RandomForestLearner,
    RandomTreeLearner,
    SubsetLearner,
)
from .modelio import ModelFileError, load_model, save_model
from .trees import ForestConfig, TreeConfig

log = logging.getLogger("nids")

ALGORITHMS = ("nb", "nb-disc", "k2bn", "rtree", "rforest", "combined")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_MODEL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _algo_options(p):
    g = p.add_argument_group("algorithm parameters")
    g.add_argument("--bins", type=_positive_int, default=10, help="discretization bins (default 10)")
    g.add_argument("--disc-method", choices=[m.value for m in Method], default=Method.EQUAL_WIDTH.value)
    g.add_argument("--smoothing", type=float, default=1.0, help="Laplace / Dirichlet constant")
    g.add_argument("--trees", type=_positive_int, default=100, help="forest size")
    g.add_argument("--bag-fraction", type=float, default=0.66)
    g.add_argument("--with-replacement", action="store_true", help="bootstrap bags instead of subsamples")
    g.add_argument("--k-features", type=_positive_int, default=None, help="candidate features per node (default log2(d)+1)")
    g.add_argument("--max-parents", type=int, default=2, help="K2 parents beyond the class")
    g.add_argument("--structure", choices=("k2", "naive"), default="k2")
    g.add_argument("--fusion", choices=[r.value for r in FusionRule], default=FusionRule.ANOMALY_UNION.value)


def _common(p, data=True, algo=False):
    if algo:
        p.add_argument("--algo", required=True, choices=ALGORITHMS)
    if data:
        p.add_argument("--data", required=True, help="training data (CSV or ARFF)")
    p.add_argument("--labels", choices=("binary", "category5"), default="binary")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output file")
    p.add_argument("--config", help="flat key=value file; command-line flags win")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nids", description="NSL-KDD intrusion-detection classifiers")
    parser.add_argument("--version", action="version", version=f"nids {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("train", help="train a model and save it")
    _common(p, algo=True)
    p.add_argument("--model", required=True, help="model file to write")
    _algo_options(p)

    p = sub.add_parser("eval", help="evaluate a saved model on a test set")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    _common(p, data=False)

    p = sub.add_parser("crossval", help="k-fold cross-validation")
    _common(p, algo=True)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--roc", help="also write the out-of-fold ROC curve here")
    _algo_options(p)

    p = sub.add_parser("roc", help="ROC curve as CSV (fpr,tpr,threshold)")
    p.add_argument("--algo", choices=ALGORITHMS)
    p.add_argument("--data", help="data for out-of-fold scores (with --algo)")
    p.add_argument("--model", help="saved model (with --test)")
    p.add_argument("--test")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--positive", default="anomaly")
    p.add_argument("--labels", choices=("binary", "category5"), default="binary")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    _algo_options(p)

    p = sub.add_parser("rank", help="information-gain feature ranking")
    _common(p)

    p = sub.add_parser("wrapper", help="wrapper feature-subset search with naive Bayes")
    _common(p)
    p.add_argument("--folds", type=int, default=5, help="inner CV folds")
    p.add_argument("--final-folds", type=int, default=10)
    p.add_argument("--strategy", choices=("greedy", "best-first"), default="greedy")
    p.add_argument("--max-features", type=int, default=None)

    p = sub.add_parser("report", help="cross-validated comparison of all algorithms")
    _common(p)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--top-n", type=int, default=None, help="also run filter-method NB keeping n features")
    p.add_argument("--wrapper", action="store_true", help="also run wrapper-method NB")
    p.add_argument("--compare-disc", action="store_true", help="run nb-disc under every discretization method")
    p.add_argument("--resub", action="store_true", help="add combined-model resubstitution")
    p.add_argument("--algos", default=",".join(ALGORITHMS), help="comma-separated subset")
    _algo_options(p)

    p = sub.add_parser("fetch-dataset", help="download a data file and verify its checksum")
    p.add_argument("--url", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sha256", help="expected hex digest")
    p.add_argument("--no-verify", action="store_true")
    return parser


def make_learner(algo: str, args) -> object:
    method = Method(args.disc_method)
    if algo == "nb":
        return NaiveBayesLearner(args.smoothing)
    if algo == "nb-disc":
        return DiscretizedNBLearner(method, args.bins, args.smoothing)
    if algo == "k2bn":
        return BayesNetLearner(method, args.bins, args.max_parents, args.smoothing, args.structure)
    if algo == "rtree":
        return RandomTreeLearner(TreeConfig(args.k_features, seed=args.seed))
    if algo == "rforest":
        return RandomForestLearner(_forest_config(args))
    if algo == "combined":
        if args.labels != "binary":
            raise UsageError("the combined detector only supports --labels binary")
        return CombinedLearner(
            BayesNetLearner(method, args.bins, args.max_parents, args.smoothing, args.structure),
            TreeConfig(args.k_features),
            _forest_config(args),
            FusionRule(args.fusion),
            args.seed,
        )
    raise UsageError(f"unknown algorithm {algo!r}")


def _forest_config(args) -> ForestConfig:
    return ForestConfig(args.trees, args.bag_fraction, args.k_features, args.seed, args.with_replacement)


def _config_echo(args) -> dict:
    keys = ("bins", "disc_method", "smoothing", "trees", "bag_fraction", "with_replacement",
            "k_features", "max_parents", "structure", "fusion", "labels")
    return {k: getattr(args, k) for k in keys if hasattr(args, k)}


def _load(path, labels):
    log.info("loading %s", path)
    return load_dataset(path, labels)


def _emit(args, text: str, csv_text: str | None = None):
    sys.stdout.write(text)
    if csv_text is not None and getattr(args, "out", None):
        atomic_write_text(args.out, csv_text)


def _report_csv(rows: list[tuple[str, EvalReport]]) -> str:
    lines = [",".join(EvalReport.CSV_COLUMNS)]
    for name, rep in rows:
        lines.append(",".join(rep.csv_row(name)))
    return "\n".join(lines) + "\n"


# --- commands -----------------------------------------------------------------


def cmd_train(args) -> int:
    learner = make_learner(args.algo, args)
    ds = _load(args.data, args.labels)
    start = time.perf_counter()
    model = learner.fit(ds)
    elapsed = time.perf_counter() - start
    save_model(args.model, model, args.algo, ds.schema, args.seed, _config_echo(args))
    print(f"Model Building Time: {elapsed:.2f} seconds")
    print(f"Model written to {args.model}")
    return EXIT_OK


def _evaluate_saved(mf, ds, mode):
    if isinstance(mf.model, CombinedModel):
        return evaluate_combined(mf.model, ds, mode=mode).report
    return evaluate_model(mf.model, ds, mode=mode)


def cmd_eval(args) -> int:
    mf = load_model(args.model)
    labels = "category5" if len(mf.schema.class_values) == 5 else "binary"
    ds = _load(args.test, labels)
    try:
        mf.check_schema(ds.schema)
    except SchemaError as exc:
        raise ModelFileError(str(exc)) from None
    report = _evaluate_saved(mf, ds, "supplied test set")
    _emit(args, report.to_text(f"{mf.algorithm} on {os.path.basename(args.test)}"),
          _report_csv([(mf.algorithm, report)]))
    return EXIT_OK


def cmd_crossval(args) -> int:
    if args.folds < 2:
        raise UsageError("--folds must be at least 2")
    learner = make_learner(args.algo, args)
    ds = _load(args.data, args.labels)
    report = cross_validate(learner, ds, args.folds, args.seed)
    _emit(args, report.to_text(f"{args.algo}, {args.folds}-fold cross-validation"),
          _report_csv([(args.algo, report)]))
    if args.roc:
        atomic_write_text(args.roc, _roc_from_report(report, ds.schema.class_values, "anomaly").to_csv())
    return EXIT_OK


def _roc_from_report(report: EvalReport, class_values, positive: str):
    if positive not in class_values:
        raise UsageError(f"positive class {positive!r} not among {class_values}")
    k = class_values.index(positive)
    return roc_points(report.probabilities[:, k], report.actual == k)


def cmd_roc(args) -> int:
    if args.model and args.test:
        mf = load_model(args.model)
        labels = "category5" if len(mf.schema.class_values) == 5 else "binary"
        ds = _load(args.test, labels)
        try:
            mf.check_schema(ds.schema)
        except SchemaError as exc:
            raise ModelFileError(str(exc)) from None
        report = _evaluate_saved(mf, ds, "supplied test set")
    elif args.algo and args.data:
        if args.folds < 2:
            raise UsageError("--folds must be at least 2")
        learner = make_learner(args.algo, args)
        ds = _load(args.data, args.labels)
        report = cross_validate(learner, ds, args.folds, args.seed)
    else:
        raise UsageError("roc needs either --model and --test, or --algo and --data")
    curve = _roc_from_report(report, ds.schema.class_values, args.positive)
    atomic_write_text(args.out, curve.to_csv())
    print(f"AUC {curve.auc:.6f} ({len(curve.fpr)} points) written to {args.out}")
    return EXIT_OK


def cmd_rank(args) -> int:
    ds = _load(args.data, args.labels)
    ranking = info_gain_rank(ds)
    names = [f.name for f in ds.schema.features]
    text = ranking.to_csv(names)
    _emit(args, text, text)
    return EXIT_OK


def cmd_wrapper(args) -> int:
    if args.folds < 2 or args.final_folds < 2:
        raise UsageError("fold counts must be at least 2")
    ds = _load(args.data, args.labels)
    subset = wrapper_search(ds, NaiveBayesLearner(), args.folds, args.seed, args.strategy,
                            max_features=args.max_features)
    final = cross_validate(NaiveBayesLearner(), project(ds, subset.indices), args.final_folds, args.seed)
    names = [f.name for f in ds.schema.features]
    text = (
        f"selected features (0-based): {list(subset.indices)}\n"
        f"  names: {[names[j] for j in subset.indices]}\n"
        f"  inner {args.folds}-fold accuracy: {subset.achieved_score:.6f}\n"
        f"  {args.final_folds}-fold accuracy: {final.accuracy:.6f}\n"
    )
    _emit(args, text, subset.to_csv(names))
    return EXIT_OK


TABLE_ROWS = (
    ("Detection Rate (%)", lambda r: f"{100 * r.accuracy:.2f}"),
    ("False Positive Rate", lambda r: f"{r.fp_rate:.3f}"),
    ("Model Building Time (Sec)", lambda r: f"{r.build_time_seconds:.2f}"),
    ("Precision", lambda r: f"{r.precision:.3f}"),
    ("Recall", lambda r: f"{r.recall:.3f}"),
    ("F-Measure", lambda r: f"{r.f_measure:.3f}"),
    ("Root Mean Squared Error", lambda r: f"{r.rmse:.4f}"),
)


def format_table(rows: list[tuple[str, EvalReport]]) -> str:
    head = [""] + [name for name, _ in rows]
    body = [[label] + [fmt(r) for _, r in rows] for label, fmt in TABLE_ROWS]
    widths = [max(len(str(line[i])) for line in [head] + body) for i in range(len(head))]
    out = io.StringIO()
    for line in [head] + body:
        out.write("  ".join(f"{cell:<{w}}" for cell, w in zip(line, widths)).rstrip() + "\n")
    return out.getvalue()


def cmd_report(args) -> int:
    if args.folds < 2:
        raise UsageError("--folds must be at least 2")
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    for a in algos:
        if a not in ALGORITHMS:
            raise UsageError(f"unknown algorithm {a!r}")
    ds = _load(args.data, args.labels)
    from .dataset import stratified_folds

    plan = stratified_folds(ds, args.folds, args.seed)
    rows: list[tuple[str, EvalReport]] = []
    for algo in algos:
        if algo == "nb-disc" and args.compare_disc:
            for m in Method:
                rep = cross_validate(DiscretizedNBLearner(m, args.bins, args.smoothing), ds, plan=plan)
                rows.append((f"nb-disc[{m.value}]", rep))
            continue
        log.info("cross-validating %s", algo)
        rows.append((algo, cross_validate(make_learner(algo, args), ds, plan=plan)))
    if args.top_n:
        rows.append((f"filter-nb[top{args.top_n}]",
                     cross_validate(FilterLearner(NaiveBayesLearner(), args.top_n), ds, plan=plan)))
    if args.wrapper:
        subset = wrapper_search(ds, NaiveBayesLearner(), 5, args.seed)
        rep = cross_validate(SubsetLearner(NaiveBayesLearner(), subset.indices), ds, plan=plan)
        rows.append((f"wrapper-nb[{'-'.join(map(str, subset.indices))}]", rep))
    if args.resub and "combined" in ALGORITHMS:
        learner = make_learner("combined", args)
        start = time.perf_counter()
        model = learner.fit(ds)
        elapsed = time.perf_counter() - start
        rows.append(("combined[resubstitution]",
                     evaluate_combined(model, ds, elapsed, "resubstitution").report))
    text = (
        f"Detection accuracy comparison: {len(ds)} records, {args.folds}-fold CV, seed {args.seed}\n"
        + format_table(rows)
    )
    _emit(args, text, _report_csv(rows))
    return EXIT_OK


def cmd_fetch(args) -> int:
    if not args.sha256 and not args.no_verify:
        raise UsageError("pass --sha256 DIGEST (or --no-verify to skip the check)")
    directory = os.path.dirname(os.path.abspath(args.out))
    tmp = os.path.join(directory, f".download-{os.getpid()}")
    digest = hashlib.sha256()
    try:
        with urllib.request.urlopen(args.url, timeout=60) as resp, open(tmp, "wb") as fh:
            for chunk in iter(lambda: resp.read(1 << 16), b""):
                digest.update(chunk)
                fh.write(chunk)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise DataError(f"download failed: {exc}") from exc
    got = digest.hexdigest()
    if args.sha256 and got.lower() != args.sha256.lower():
        os.unlink(tmp)
        raise DataError(f"checksum mismatch: expected {args.sha256}, got {got}")
    os.replace(tmp, args.out)
    print(f"{args.out} sha256={got}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "crossval": cmd_crossval,
    "roc": cmd_roc,
    "rank": cmd_rank,
    "wrapper": cmd_wrapper,
    "report": cmd_report,
    "fetch-dataset": cmd_fetch,
}


def _read_config(path) -> dict[str, str]:
    values = {}
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{lineno}: expected key=value")
                key, value = line.split("=", 1)
                values[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    return values


def _parse(argv):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known_args, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if not a.startswith("-")), None)
    subparsers = parser._subparsers._group_actions[0].choices
    if known_args.config and command in subparsers:
        subparser = subparsers[command]
        known = {a.dest: a for a in subparser._actions}
        for key, value in _read_config(known_args.config).items():
            if key not in known or key in ("help", "config"):
                raise UsageError(f"unknown config key {key!r}")
            action = known[key]
            if isinstance(action, argparse._StoreTrueAction):
                value = value.lower() in ("1", "true", "yes", "on")
            subparser.set_defaults(**{key: value})
            action.required = False  # satisfied by the file
    return parser.parse_args(argv)


def main(argv=None) -> int:
    try:
        args = _parse(argv)
    except UsageError as exc:
        print(f"nids: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"nids: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelFileError, InconsistentEvidence) as exc:
        print(f"nids: model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except DataError as exc:
        print(f"nids: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, IndexError) as exc:
        print(f"nids: training error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
