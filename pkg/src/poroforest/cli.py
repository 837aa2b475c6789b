"""Command-line interface.

Exit codes: 0 success, 1 usage problems, 2 bad input data, 3 numeric
breakdown. Every failure prints a single diagnostic line to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .chemomech import (
    ChemoMixInput,
    default_composition,
    load_composition,
    mix_input_from_record,
    papadakis_porosity,
)
from .dataset import (
    FEATURE_NAMES,
    apply_assignment,
    load_csv,
    stratified_split,
    write_csv,
)
from .ensemble import (
    BoostParams,
    ForestModel,
    ForestParams,
    fit_lsboost,
    fit_random_forest,
    load_model,
    oob_mse,
    permutation_importance,
    save_model,
)
from .errors import DataError, NumericError
from .interpret import partial_dependence_1d, partial_dependence_2d
from .metrics import evaluate
from .tuning import (
    BOOST_SPACE,
    FOREST_SPACE,
    bayes_optimize,
    objective_gbt,
    objective_rf,
    write_trace_jsonl,
)

DEFAULT_SEED = 42

# Replacement-level / curing-age grids swept by the sensitivity command.
# Base mix held fixed: w/b 0.4, 400 kg/m3 binder, no superplasticizer,
# coarse/fine ratio 2, air curing.
SENSITIVITY_REPLACEMENTS = (0, 10, 20, 30, 40)
SENSITIVITY_DAYS = {
    "fly_ash": (7, 28, 90, 180, 270),
    "ggbs": (3, 7, 28, 56),
}
_SENSITIVITY_BASE = {"w_b": 0.4, "binder": 400.0, "sp": 0.0, "ca_fa": 2.0}


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this CLI reserves 2 for data
    problems, so usage failures exit 1 instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _out_stream(path):
    if path is None:
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def _select_subset(dataset, which: str):
    if which == "all":
        return dataset
    if which == "auto":
        return dataset.training_subset()
    if which == "train":
        idx = [i for i, r in enumerate(dataset) if r.training is True]
    else:  # test
        idx = [i for i, r in enumerate(dataset) if r.training is False]
    if not idx:
        raise DataError(f"input has no rows flagged for subset {which!r}")
    return dataset.subset(idx)


def _add_subset_flag(parser, default: str):
    parser.add_argument(
        "--subset",
        choices=("auto", "all", "train", "test"),
        default=default,
        help="which rows to use: auto = training-flagged rows when present, "
        f"otherwise all (default: {default})",
    )


def _add_common_io(parser, *, needs_output: bool):
    parser.add_argument("--input", required=True, help="mix CSV file")
    if needs_output:
        parser.add_argument("--output", required=True, help="where to write the result")


# --------------------------------------------------------------------------
# command handlers


def _cmd_split(args) -> int:
    dataset = load_csv(args.input)
    assignment = stratified_split(dataset, args.fraction, args.seed)
    flagged = apply_assignment(dataset, assignment)
    write_csv(flagged, args.output)
    print(
        f"split {len(dataset)} records: {len(assignment.train_indices)} train / "
        f"{len(assignment.test_indices)} test (seed {args.seed}) -> {args.output}"
    )
    return 0


def _cmd_train_rf(args) -> int:
    dataset = _select_subset(load_csv(args.input), args.subset)
    params = ForestParams(
        n_trees=args.n_trees,
        min_leaf=args.min_leaf,
        features_per_split=args.features_per_split,
        max_splits=args.max_splits,
    )
    model = fit_random_forest(dataset, params, args.seed)
    save_model(model, args.output)
    try:
        estimate = f"OOB MSE {oob_mse(model, dataset):.4f}"
    except DataError:
        estimate = "OOB MSE n/a"
    print(
        f"trained forest: {params.n_trees} trees on {len(dataset)} records; "
        f"{estimate} -> {args.output}"
    )
    return 0


def _cmd_train_gbt(args) -> int:
    dataset = _select_subset(load_csv(args.input), args.subset)
    params = BoostParams(
        n_trees=args.n_trees,
        learning_rate=args.learning_rate,
        max_splits=args.max_splits,
        min_leaf=args.min_leaf,
    )
    model = fit_lsboost(dataset, params, args.seed)
    save_model(model, args.output)
    X, y = dataset.design_matrix()
    resid = y - model.predict_batch(X)
    train_rmse = float(np.sqrt(np.mean(resid * resid)))
    print(
        f"trained boosted ensemble: {params.n_trees} trees on {len(dataset)} "
        f"records; training RMSE {train_rmse:.4f} -> {args.output}"
    )
    return 0


def _trace_path(args) -> Path:
    if args.trace is not None:
        return Path(args.trace)
    return Path(args.output).with_suffix(".trace.jsonl")


def _cmd_tune_rf(args) -> int:
    dataset = _select_subset(load_csv(args.input), args.subset)
    objective = objective_rf(dataset, args.seed)
    result = bayes_optimize(objective, FOREST_SPACE, args.budget, args.seed)
    params = ForestParams(
        n_trees=300,
        min_leaf=result.best_point["min_leaf"],
        features_per_split=result.best_point["features_per_split"],
    )
    model = fit_random_forest(dataset, params, args.seed)
    save_model(model, args.output)
    trace_path = _trace_path(args)
    write_trace_jsonl(result.trace, trace_path)
    print(
        f"tuned forest in {result.budget_used} evaluations: "
        f"best {result.best_point} (OOB MSE {result.best_value:.4f})"
    )
    print(f"model -> {args.output}; trace -> {trace_path}")
    return 0


def _cmd_tune_gbt(args) -> int:
    dataset = _select_subset(load_csv(args.input), args.subset)
    objective = objective_gbt(dataset, k=args.k, seed=args.seed)
    result = bayes_optimize(objective, BOOST_SPACE, args.budget, args.seed)
    params = BoostParams(
        n_trees=result.best_point["n_trees"],
        learning_rate=result.best_point["learning_rate"],
        max_splits=result.best_point["max_splits"],
        min_leaf=result.best_point["min_leaf"],
    )
    model = fit_lsboost(dataset, params, args.seed)
    save_model(model, args.output)
    trace_path = _trace_path(args)
    write_trace_jsonl(result.trace, trace_path)
    print(
        f"tuned boosted ensemble in {result.budget_used} evaluations: "
        f"best {result.best_point} (log1p CV loss {result.best_value:.4f})"
    )
    print(f"model -> {args.output}; trace -> {trace_path}")
    return 0


def _cmd_evaluate(args) -> int:
    dataset = _select_subset(load_csv(args.input), args.subset)
    model = load_model(args.model)
    X, y = dataset.design_matrix()
    if len(X) == 0:
        raise DataError("nothing to evaluate: the selected subset is empty")
    report = evaluate(y, model.predict_batch(X), partial=True)
    if args.json:
        payload = report.as_dict()
        payload["records"] = report.m
        json.dump(payload, sys.stdout)
        print()
        return 0
    print(f"records: {report.m}")
    print(f"rmse: {report.rmse:.6g}" if report.rmse is not None else "rmse: n/a")
    print(f"mape: {report.mape:.6g}%" if report.mape is not None else "mape: n/a")
    print(f"r2: {report.r2:.6g}" if report.r2 is not None else "r2: n/a")
    return 0


def _cmd_importance(args) -> int:
    dataset = _select_subset(load_csv(args.input), args.subset)
    model = load_model(args.model)
    if not isinstance(model, ForestModel):
        raise DataError(
            "permutation importance needs a forest model (it scores trees on "
            "their out-of-bag rows)"
        )
    report = permutation_importance(
        model, dataset, n_repeats=args.repeats, seed=args.seed
    )
    if args.json:
        payload = {
            name: {
                "mean_increase": float(report.mean_increase[i]),
                "std_increase": float(report.std_increase[i]),
                "vi": float(report.vi[i]),
            }
            for i, name in enumerate(report.features)
        }
        json.dump(payload, sys.stdout)
        print()
        return 0
    width = max(len(name) for name in report.features)
    print(f"{'feature':<{width}}  {'mean_increase':>13}  {'std':>10}  {'vi':>8}")
    for i, name in enumerate(report.features):
        print(
            f"{name:<{width}}  {report.mean_increase[i]:>13.4f}  "
            f"{report.std_increase[i]:>10.4f}  {report.vi[i]:>8.3f}"
        )
    return 0


def _cmd_pdp(args) -> int:
    dataset = _select_subset(load_csv(args.input), args.subset)
    model = load_model(args.model)
    stream, close = _out_stream(args.output)
    try:
        if args.feature2 is None:
            curve = partial_dependence_1d(
                model, dataset, args.feature, grid_size=args.grid
            )
            if args.json:
                json.dump(curve.as_dict(), stream)
                stream.write("\n")
            else:
                writer = csv.writer(stream)
                writer.writerow([curve.feature, "prediction"])
                for g, v in zip(curve.grid, curve.values):
                    writer.writerow([f"{g:g}", f"{v:.6g}"])
        else:
            surface = partial_dependence_2d(
                model, dataset, args.feature, args.feature2, grid_size=args.grid
            )
            if args.json:
                json.dump(surface.as_dict(), stream)
                stream.write("\n")
            else:
                writer = csv.writer(stream)
                writer.writerow([surface.feature_x, surface.feature_y, "prediction"])
                for a, gx in enumerate(surface.grid_x):
                    for b, gy in enumerate(surface.grid_y):
                        writer.writerow(
                            [f"{gx:g}", f"{gy:g}", f"{surface.values[a, b]:.6g}"]
                        )
    finally:
        if close:
            stream.close()
    return 0


def _sensitivity_rows(model, binder_type: str):
    days = SENSITIVITY_DAYS[binder_type]
    base = _SENSITIVITY_BASE
    rows = []
    for replacement in SENSITIVITY_REPLACEMENTS:
        for day in days:
            features = np.array(
                [
                    base["w_b"],
                    base["binder"],
                    float(replacement) if binder_type == "fly_ash" else 0.0,
                    float(replacement) if binder_type == "ggbs" else 0.0,
                    base["sp"],
                    base["ca_fa"],
                    0.0,  # air curing
                    float(day),
                ]
            )
            prediction = float(model.predict_batch(features.reshape(1, -1))[0])
            rows.append((replacement, day, prediction))
    return rows


def _cmd_sensitivity(args) -> int:
    model = load_model(args.model)
    rows = _sensitivity_rows(model, args.binder_type)
    stream, close = _out_stream(args.output)
    try:
        if args.json:
            payload = {
                "binder_type": args.binder_type,
                "rows": [
                    {
                        "replacement_pct": repl,
                        "curing_days": day,
                        "prediction": pred,
                    }
                    for repl, day, pred in rows
                ],
            }
            json.dump(payload, stream)
            stream.write("\n")
        else:
            writer = csv.writer(stream)
            writer.writerow(["replacement_pct", "curing_days", "prediction"])
            for repl, day, pred in rows:
                writer.writerow([repl, day, f"{pred:.6g}"])
    finally:
        if close:
            stream.close()
    return 0


def _load_dose_csv(path, eps_air_default: float) -> list[ChemoMixInput]:
    """Read a dose table: cement, fly_ash, water columns in kg/m3 plus an
    optional eps_air column (air volume fraction)."""
    try:
        handle = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    mixes = []
    with handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        fields = [name.strip() for name in reader.fieldnames]
        for required in ("cement", "fly_ash", "water"):
            if required not in fields:
                raise DataError(f"{path}: missing column {required!r}")
        for line_no, row in enumerate(reader, start=2):
            row = {k.strip(): v for k, v in row.items() if k is not None}

            def number(column, default=None):
                raw = row.get(column)
                if raw is None or raw.strip() == "":
                    if default is not None:
                        return default
                    raise DataError(f"{path} line {line_no}: missing {column}")
                try:
                    return float(raw)
                except ValueError:
                    raise DataError(
                        f"{path} line {line_no}: {column} is not a number: {raw!r}"
                    ) from None

            mixes.append(
                ChemoMixInput(
                    cement=number("cement"),
                    water=number("water"),
                    fly_ash=number("fly_ash"),
                    eps_air=number("eps_air", default=eps_air_default)
                    if "eps_air" in fields
                    else eps_air_default,
                )
            )
    if not mixes:
        raise DataError(f"{path}: no data rows")
    return mixes


def _cmd_chemomech(args) -> int:
    comps = (
        load_composition(args.composition)
        if args.composition is not None
        else default_composition()
    )
    if args.from_mixes:
        dataset = load_csv(args.input)
        mixes = [
            mix_input_from_record(record, eps_air=args.eps_air)
            for record in dataset
        ]
    else:
        mixes = _load_dose_csv(args.input, args.eps_air)
    results = [papadakis_porosity(mix, comps) for mix in mixes]
    stream, close = _out_stream(args.output)
    try:
        if args.json:
            payload = [
                dict(
                    cement=mix.cement,
                    fly_ash=mix.fly_ash,
                    water=mix.water,
                    eps_air=mix.eps_air,
                    **res.as_dict(),
                )
                for mix, res in zip(mixes, results)
            ]
            json.dump(payload, stream)
            stream.write("\n")
        else:
            writer = csv.writer(stream)
            writer.writerow(
                [
                    "cement",
                    "fly_ash",
                    "water",
                    "eps_air",
                    "branch",
                    "p_max",
                    "p_effective",
                    "porosity",
                    "porosity_pct",
                ]
            )
            for mix, res in zip(mixes, results):
                writer.writerow(
                    [
                        f"{mix.cement:g}",
                        f"{mix.fly_ash:g}",
                        f"{mix.water:g}",
                        f"{mix.eps_air:g}",
                        res.branch,
                        f"{res.p_max:.6g}",
                        f"{res.p_effective:.6g}",
                        f"{res.porosity:.6g}",
                        f"{100.0 * res.porosity:.6g}",
                    ]
                )
    finally:
        if close:
            stream.close()
    return 0


# --------------------------------------------------------------------------
# parser assembly


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="poroforest",
        description="Porosity modeling for cement mixes: tree ensembles plus "
        "a chemistry-based baseline.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    commands = parser.add_subparsers(
        dest="command", required=True, parser_class=_Parser
    )

    p = commands.add_parser(
        "split", help="assign a stratified train/test partition to a mix CSV"
    )
    _add_common_io(p, needs_output=True)
    p.add_argument("--fraction", type=float, default=0.75,
                   help="training fraction (default 0.75)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=_cmd_split)

    p = commands.add_parser("train-rf", help="fit a random forest")
    _add_common_io(p, needs_output=True)
    _add_subset_flag(p, "auto")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--n-trees", type=int, default=300)
    p.add_argument("--min-leaf", type=int, default=5)
    p.add_argument("--features-per-split", type=int, default=3)
    p.add_argument("--max-splits", type=int, default=None,
                   help="split budget per tree (default: unrestricted)")
    p.set_defaults(func=_cmd_train_rf)

    p = commands.add_parser("train-gbt", help="fit a boosted tree ensemble")
    _add_common_io(p, needs_output=True)
    _add_subset_flag(p, "auto")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--max-splits", type=int, default=10)
    p.add_argument("--min-leaf", type=int, default=5)
    p.set_defaults(func=_cmd_train_gbt)

    p = commands.add_parser(
        "tune-rf", help="tune forest hyperparameters against OOB error"
    )
    _add_common_io(p, needs_output=True)
    _add_subset_flag(p, "auto")
    p.add_argument("--budget", type=int, default=30,
                   help="objective evaluations (default 30)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--trace", default=None,
                   help="trace JSONL path (default: <output>.trace.jsonl)")
    p.set_defaults(func=_cmd_tune_rf)

    p = commands.add_parser(
        "tune-gbt", help="tune boosting hyperparameters against CV error"
    )
    _add_common_io(p, needs_output=True)
    _add_subset_flag(p, "auto")
    p.add_argument("--budget", type=int, default=30)
    p.add_argument("--k", type=int, default=10, help="CV folds (default 10)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--trace", default=None,
                   help="trace JSONL path (default: <output>.trace.jsonl)")
    p.set_defaults(func=_cmd_tune_gbt)

    p = commands.add_parser(
        "evaluate", help="score a saved model on a mix CSV (RMSE, MAPE, R2)"
    )
    _add_common_io(p, needs_output=False)
    p.add_argument("--model", required=True, help="saved model JSON")
    _add_subset_flag(p, "all")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=_cmd_evaluate)

    p = commands.add_parser(
        "importance", help="permutation importance of a forest model"
    )
    _add_common_io(p, needs_output=False)
    p.add_argument("--model", required=True)
    _add_subset_flag(p, "auto")
    p.add_argument("--repeats", type=int, default=1,
                   help="permutations per tree and feature (default 1)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_importance)

    p = commands.add_parser(
        "pdp", help="partial dependence of a saved model on one or two features"
    )
    _add_common_io(p, needs_output=False)
    p.add_argument("--model", required=True)
    _add_subset_flag(p, "auto")
    p.add_argument("--feature", required=True, choices=FEATURE_NAMES)
    p.add_argument("--feature2", default=None, choices=FEATURE_NAMES,
                   help="second feature for a 2-D surface")
    p.add_argument("--grid", type=int, default=50,
                   help="grid points per numeric feature (default 50)")
    p.add_argument("--output", default=None, help="write here instead of stdout")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_pdp)

    p = commands.add_parser(
        "sensitivity",
        help="model predictions over a replacement-level / curing-age grid",
    )
    p.add_argument("--model", required=True)
    p.add_argument("--binder-type", required=True, choices=("fly_ash", "ggbs"))
    p.add_argument("--output", default=None, help="write here instead of stdout")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_sensitivity)

    p = commands.add_parser(
        "chemomech",
        help="chemistry-based porosity for cement / fly-ash mixes",
    )
    p.add_argument("--input", required=True,
                   help="dose CSV (cement,fly_ash,water[,eps_air]) or, with "
                   "--from-mixes, a mix CSV")
    p.add_argument("--from-mixes", action="store_true",
                   help="interpret --input as a mix CSV (binder + percentages)")
    p.add_argument("--composition", default=None,
                   help="oxide composition JSON (default: built-in)")
    p.add_argument("--eps-air", type=float, default=0.0,
                   help="entrapped-air volume fraction (default 0)")
    p.add_argument("--output", default=None, help="write here instead of stdout")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_chemomech)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse handles --help/usage itself; surface its status as a
        # return value so callers get an int either way
        return int(exc.code or 0)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"poroforest: error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"poroforest: error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        # flag values that violate a library contract (budget 0,
        # fraction outside (0, 1), ...) are usage errors, same as
        # argparse's own rejections
        print(f"poroforest: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
