"""Command-line front end.

Subcommands cover every pipeline stage: fit, two-stage, cluster, screen,
simulate, smote, and metrics.  Outputs are CSV for tabular data and JSON
(with a schema_version field) for nested reports.  Exit codes: 0 success,
1 numerical failure, 2 usage or validation failure.  All commands are
deterministic under a fixed --seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .clustering import stability_with_tree
from .data import (
    QUANTITATIVE,
    Dataset,
    Partition,
    expand_groups,
    load_csv,
    save_csv,
    standardize,
)
from .errors import GroupselError, InvalidSpec
from .metrics import (
    SelectionTruth,
    SmoteConfig,
    classification_metrics,
    rmse,
    selection_metrics,
    smote,
)
from .penalties import PenaltySpec
from .screening import DCSIS, SIS, screen
from .simulation import aggregate, generate, run_experiment, sim_design
from .solvers import (
    GROUP_FAMILIES,
    INDIVIDUAL_FAMILIES,
    LOGISTIC,
    SQUARED_ERROR,
    GroupPenaltySpec,
    cross_validate,
    default_lambda_grid,
    fit_group,
    fit_individual,
    lambda_max,
)
from .two_stage import TwoStageConfig, run_two_stage

log = logging.getLogger("groupsel")

DEFAULT_SEED = 12021
SCHEMA_VERSION = 1


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(float(x))  # shortest round-trip repr, numpy scalars included
    return str(x)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def _write_json(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _require_file(path, what: str) -> str:
    if not os.path.isfile(path):
        raise InvalidSpec(f"{what} not found: {path}")
    return path


def _load_dataset(args) -> Dataset:
    _require_file(args.data, "data file")
    _require_file(args.schema, "schema file")
    return load_csv(args.data, args.schema)


def _load_groups(path, dataset: Dataset) -> Partition:
    """variable,group CSV -> variable-level Partition in dataset order."""
    _require_file(path, "groups file")
    mapping = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"variable", "group"} <= set(reader.fieldnames):
            raise InvalidSpec(f"{path}: groups CSV needs 'variable' and 'group' columns")
        for row in reader:
            mapping[row["variable"]] = int(row["group"])
    missing = [v.name for v in dataset.variables if v.name not in mapping]
    if missing:
        raise InvalidSpec(f"groups file misses variables: {', '.join(missing[:5])}")
    labels = np.array([mapping[v.name] for v in dataset.variables])
    uniq = sorted(set(labels.tolist()))
    relabel = {g: i + 1 for i, g in enumerate(uniq)}
    return Partition(np.array([relabel[g] for g in labels]), len(uniq))


def _loss_of(dataset: Dataset) -> str:
    return LOGISTIC if dataset.response_kind == "binary" else SQUARED_ERROR


def _original_scale(coef, sm) -> dict:
    """Map standardized-scale coefficients back to the raw-column scale."""
    beta_orig = coef.beta / sm.scales
    intercept = coef.intercept - float(np.sum(coef.beta * sm.centers / sm.scales))
    return {"intercept": intercept, "beta": beta_orig.tolist()}


def cmd_fit(args) -> int:
    dataset = _load_dataset(args)
    loss = _loss_of(dataset)
    sm = standardize(dataset)
    family = args.family

    if family in INDIVIDUAL_FAMILIES:
        spec = PenaltySpec(family, 0.0, args.gamma)
        part_cols = None
    elif family in GROUP_FAMILIES:
        if not args.groups:
            raise InvalidSpec(f"--groups is required for family {family}")
        part = _load_groups(args.groups, dataset)
        part_cols = expand_groups(part, sm.column_map)
        gamma = args.gamma if family in ("grscad", "grmcp") else None
        alpha = args.alpha if family == "sgl" else None
        spec = GroupPenaltySpec(family, 0.0, gamma=gamma, alpha=alpha)
    else:
        raise InvalidSpec(f"unknown family {family!r}")

    alpha = spec.alpha if isinstance(spec, GroupPenaltySpec) else None
    lmax = lambda_max(sm, dataset.y, loss, part_cols, family, alpha=alpha)
    grid = default_lambda_grid(
        lmax, args.n_lambda, args.lambda_min_ratio, p_over_n=sm.n_columns > sm.n
    )
    cv = cross_validate(
        sm, dataset.y, loss, part_cols, spec, grid,
        folds=args.cv, seed=args.seed, n_jobs=args.jobs,
    )
    if family in INDIVIDUAL_FAMILIES:
        fit = fit_individual(sm, dataset.y, loss, spec, grid)
    else:
        fit = fit_group(sm, dataset.y, loss, part_cols, spec, grid)

    best = fit.coefficients_at(cv.best_lambda)
    selected = [
        dataset.variables[j].name
        for j, (lo, hi) in enumerate(sm.column_map)
        if np.any(best.beta[lo:hi] != 0.0)
    ]
    doc = {
        "schema_version": SCHEMA_VERSION,
        "family": family,
        "loss": loss,
        "lambdas": fit.lambdas.tolist(),
        "df": fit.df_path.tolist(),
        "converged": fit.converged.astype(int).tolist(),
        "loss_path": fit.loss_path.tolist(),
        "path": [
            {"intercept": c.intercept, "beta": c.beta.tolist()} for c in fit.path
        ],
        "best_lambda": cv.best_lambda,
        "best_coefficients": {
            "standardized": {"intercept": best.intercept, "beta": best.beta.tolist()},
            "original_scale": _original_scale(best, sm),
        },
        "selected_variables": selected,
        "columns": [
            {"variable": dataset.variables[j].name, "start": lo, "stop": hi}
            for j, (lo, hi) in enumerate(sm.column_map)
        ],
    }
    _write_json(f"{args.out_prefix}_path.json", doc)
    _write_csv(
        f"{args.out_prefix}_cv.csv",
        ["lambda", "mean_loss"],
        list(zip(fit.lambdas.tolist(), cv.cv_curve.tolist())),
    )
    log.info("best lambda %.6g; %d variable(s) selected", cv.best_lambda, len(selected))
    return 0


def cmd_two_stage(args) -> int:
    dataset = _load_dataset(args)
    cfg = TwoStageConfig(
        family=args.family,
        loss=_loss_of(dataset),
        gamma=args.gamma if args.family in ("grscad", "grmcp") else None,
        alpha=args.alpha if args.family == "sgl" else None,
        screen_threshold=args.screen_threshold,
        k_factor=args.k_factor,
        j_boot=args.j_boot,
        max_candidates=args.max_candidates,
        cv_folds=args.cv,
        n_lambda=args.n_lambda,
        lambda_min_ratio=args.lambda_min_ratio,
        seed=args.seed,
    )
    report = run_two_stage(dataset, cfg)
    _write_json(f"{args.out_prefix}_report.json", report.to_dict())
    _write_csv(
        f"{args.out_prefix}_selected.csv",
        ["variable", "name"],
        list(zip(report.selected_variables, report.selected_names)),
    )
    log.info(
        "two-stage: %d cluster(s), %d variable(s) selected",
        report.partition.k,
        len(report.selected_variables),
    )
    return 0


def cmd_cluster(args) -> int:
    dataset = _load_dataset(args)
    curve, dend = stability_with_tree(
        dataset, j_boot=args.j_boot, seed=args.seed, max_candidates=args.max_candidates
    )
    _write_json(
        f"{args.out_prefix}_dendrogram.json",
        {
            "schema_version": SCHEMA_VERSION,
            "leaves": list(dend.leaf_names),
            "merges": dend.to_records(),
            "chosen_m": curve.chosen_m,
        },
    )
    _write_csv(
        f"{args.out_prefix}_stability.csv",
        ["m", "mean_ari"],
        list(zip(curve.cluster_counts, curve.mean_ari)),
    )
    log.info("stability selected m = %d", curve.chosen_m)
    return 0


def cmd_screen(args) -> int:
    dataset = _load_dataset(args)
    if dataset.p <= dataset.n:
        print(
            "note: p <= n, so the two-stage pipeline would skip screening "
            "for data of this shape; screening anyway.",
            file=sys.stderr,
        )
    sm = standardize(dataset)
    result = screen(sm, dataset.y, args.method, args.k_factor)
    rank_of = np.empty(dataset.p, dtype=int)
    rank_of[result.ranking] = np.arange(1, dataset.p + 1)
    kept = set(int(i) for i in result.kept)
    rows = [
        (dataset.variables[j].name, float(result.scores[j]), int(rank_of[j]),
         1 if j in kept else 0)
        for j in range(dataset.p)
    ]
    _write_csv(args.out, ["variable", "score", "rank", "kept"], rows)
    log.info("kept %d of %d variables", result.d, dataset.p)
    return 0


def _parse_rhos(arg, design_id: int):
    if arg:
        return tuple(float(x) for x in arg.split(","))
    if design_id == 1:
        return tuple(np.round(np.arange(0.1, 0.91, 0.05), 2).tolist())
    return (0.2, 0.5, 0.8)


def cmd_simulate(args) -> int:
    rhos = _parse_rhos(args.rho, args.design)
    if args.export_instance:
        design = sim_design(args.design, rhos[0], n=args.n, p=args.p)
        inst = generate(design, seed=args.seed)
        save_csv(inst.dataset, f"{args.export_instance}.csv",
                 f"{args.export_instance}.schema.json")
        _write_json(
            f"{args.export_instance}.truth.json",
            {
                "schema_version": SCHEMA_VERSION,
                "active_variables": sorted(inst.truth.active),
                "active_groups": sorted(inst.active_groups),
                "blocks": inst.true_partition.assignment.tolist(),
                "terms": [
                    {"variable": t.var, "level": t.level, "value": t.value}
                    for t in inst.coefficients
                ],
                "noise_sd": inst.noise_sd,
            },
        )
        log.info("exported one instance of design %d", args.design)
        return 0

    families = tuple(args.families.split(","))
    cfg = TwoStageConfig(
        j_boot=args.j_boot, cv_folds=args.cv, n_lambda=args.n_lambda,
        max_candidates=args.max_candidates,
    )
    records = run_experiment(
        args.design, families=families, rhos=rhos, replicates=args.replicates,
        seed=args.seed, n=args.n, p=args.p, cfg=cfg, n_jobs=args.jobs,
    )
    rows = [
        (r["design"], r["family"], r["rho"], r["case"], r["metric"],
         r["mean"], r["sd"], r["replicates"])
        for r in aggregate(records)
    ]
    _write_csv(
        args.out,
        ["design", "family", "rho", "case", "metric", "mean", "sd", "replicates"],
        rows,
    )
    log.info("wrote %d summary rows to %s", len(rows), args.out)
    return 0


def cmd_smote(args) -> int:
    dataset = _load_dataset(args)
    if dataset.response_kind != "binary":
        raise InvalidSpec("smote needs a binary response")
    if any(v.kind != QUANTITATIVE for v in dataset.variables):
        raise InvalidSpec("smote interpolation needs all-quantitative columns; "
                          "encode qualitative variables first")
    x = np.column_stack([v.values for v in dataset.variables])
    n1 = int(dataset.y.sum())
    n0 = dataset.n - n1
    minority_label = 1.0 if n1 <= n0 else 0.0
    minority_rows = x[dataset.y == minority_label]
    majority_count = max(n0, n1)
    cfg = SmoteConfig(k_neighbors=args.k_neighbors, target_ratio=args.target_ratio,
                      seed=args.seed)
    synth = smote(minority_rows, majority_count, cfg)

    header = [v.name for v in dataset.variables] + ["y", "synthetic"]
    rows = [
        tuple(float(x[i, j]) for j in range(x.shape[1])) + (float(dataset.y[i]), 0)
        for i in range(dataset.n)
    ]
    rows += [
        tuple(float(v) for v in row) + (minority_label, 1)
        for row in synth
    ]
    _write_csv(args.out, header, rows)
    log.info("added %d synthetic minority row(s)", len(synth))
    return 0


def _read_two_columns(path, col_a, col_b):
    _require_file(path, "predictions file")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {col_a, col_b} <= set(reader.fieldnames):
            raise InvalidSpec(f"{path}: needs columns {col_a!r} and {col_b!r}")
        a, b = [], []
        for row in reader:
            a.append(float(row[col_a]))
            b.append(float(row[col_b]))
    return np.asarray(a), np.asarray(b)


def _parse_index_list(arg) -> list[int]:
    if not arg:
        return []
    return [int(x) for x in arg.split(",")]


def cmd_metrics(args) -> int:
    if args.kind == "regression":
        y, pred = _read_two_columns(args.pred, "y_true", "y_pred")
        doc = {"kind": "regression", "rmse": rmse(y, pred)}
    elif args.kind == "classification":
        y, score = _read_two_columns(args.pred, "y_true", "score")
        acc, sens, spec, auc = classification_metrics(y, score, args.cutoff)
        doc = {
            "kind": "classification", "cutoff": args.cutoff,
            "accuracy": acc, "sensitivity": sens, "specificity": spec, "auc": auc,
        }
    else:
        if args.p is None:
            raise InvalidSpec("selection metrics need --p (total variable count)")
        truth = SelectionTruth(frozenset(_parse_index_list(args.active)), args.p)
        sens, spec = selection_metrics(
            truth, _parse_index_list(args.selected), as_printed=args.as_printed
        )
        doc = {
            "kind": "selection",
            "mode": "as_printed" if args.as_printed else "default",
            "sensitivity": sens, "specificity": spec,
        }
    doc["schema_version"] = SCHEMA_VERSION
    _write_json(args.out, doc)
    return 0


def _add_io(p, out_prefix=True):
    p.add_argument("--data", required=True, help="input CSV (header row required)")
    p.add_argument("--schema", required=True,
                   help="sidecar JSON schema tagging columns and the response")
    if out_prefix:
        p.add_argument("--out-prefix", required=True, help="prefix for output files")


def _add_seed(p):
    p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                   help=f"random seed (default {DEFAULT_SEED})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="groupsel",
        description="Two-stage group variable selection: discover a group "
                    "structure by clustering, then fit group-penalized models.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a penalized model with cross-validated lambda")
    _add_io(p)
    p.add_argument("--family", required=True,
                   choices=list(INDIVIDUAL_FAMILIES) + list(GROUP_FAMILIES))
    p.add_argument("--groups", help="variable,group CSV (group families only)")
    p.add_argument("--gamma", type=float, default=None,
                   help="scad/mcp concavity (defaults 3.7 / 3.0)")
    p.add_argument("--alpha", type=float, default=0.5,
                   help="sgl mixing weight toward the group penalty (default 0.5)")
    p.add_argument("--cv", type=int, default=10, help="cross-validation folds (default 10)")
    p.add_argument("--n-lambda", type=int, default=100, help="grid size (default 100)")
    p.add_argument("--lambda-min-ratio", type=float, default=None,
                   help="smallest grid value as a fraction of lambda_max "
                        "(default 0.001, or 0.05 when p > n)")
    p.add_argument("--jobs", type=int, default=1, help="parallel CV folds (default 1)")
    _add_seed(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("two-stage", help="screen (if wide), cluster, then fit")
    _add_io(p)
    p.add_argument("--family", default="grlasso", choices=list(GROUP_FAMILIES))
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--screen-threshold", type=int, default=None,
                   help="screen iff p exceeds this (default: n)")
    p.add_argument("--k-factor", type=float, default=None,
                   help="screening retention factor (default 1; 2 once p >= 1000)")
    p.add_argument("--j-boot", type=int, default=50,
                   help="bootstrap replicates for stability (default 50)")
    p.add_argument("--max-candidates", type=int, default=30,
                   help="largest cluster count scored by stability (default 30)")
    p.add_argument("--cv", type=int, default=10)
    p.add_argument("--n-lambda", type=int, default=100)
    p.add_argument("--lambda-min-ratio", type=float, default=None)
    _add_seed(p)
    p.set_defaults(func=cmd_two_stage)

    p = sub.add_parser("cluster", help="hierarchical variable clustering + stability")
    _add_io(p)
    p.add_argument("--j-boot", type=int, default=50)
    p.add_argument("--max-candidates", type=int, default=30)
    _add_seed(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("screen", help="rank variables by marginal association")
    _add_io(p, out_prefix=False)
    p.add_argument("--method", default=DCSIS, choices=[SIS, DCSIS])
    p.add_argument("--k-factor", type=float, default=1.0,
                   help="retain ceil(k*n/log n) variables (default k=1)")
    p.add_argument("--out", required=True, help="output CSV path")
    _add_seed(p)
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("simulate", help="run the benchmark designs")
    p.add_argument("--design", type=int, required=True, choices=[1, 2, 3, 4, 5])
    p.add_argument("--rho", default=None,
                   help="comma-separated correlation levels (default: design grid)")
    p.add_argument("--replicates", type=int, default=50)
    p.add_argument("--families", default="grlasso,grscad,grmcp,sgl")
    p.add_argument("--n", type=int, default=None, help="override observation count")
    p.add_argument("--p", type=int, default=None, help="override variable count")
    p.add_argument("--j-boot", type=int, default=50)
    p.add_argument("--max-candidates", type=int, default=30)
    p.add_argument("--cv", type=int, default=10)
    p.add_argument("--n-lambda", type=int, default=100)
    p.add_argument("--jobs", type=int, default=os.cpu_count(),
                   help="parallel replicates (default: all cores)")
    p.add_argument("--out", default="results.csv", help="summary CSV path")
    p.add_argument("--export-instance", default=None,
                   help="write one generated instance (CSV+schema+truth) and exit")
    _add_seed(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("smote", help="oversample the minority class")
    _add_io(p, out_prefix=False)
    p.add_argument("--k-neighbors", type=int, default=5)
    p.add_argument("--target-ratio", type=float, default=1.0,
                   help="desired minority/majority ratio (default 1.0)")
    p.add_argument("--out", required=True, help="output CSV path")
    _add_seed(p)
    p.set_defaults(func=cmd_smote)

    p = sub.add_parser("metrics", help="compute metrics from prediction/selection files")
    p.add_argument("--kind", required=True,
                   choices=["regression", "classification", "selection"])
    p.add_argument("--pred", help="CSV with y_true,y_pred or y_true,score columns")
    p.add_argument("--cutoff", type=float, default=0.5)
    p.add_argument("--p", type=int, default=None, help="total variable count (selection)")
    p.add_argument("--active", default="", help="comma-separated true active indices (0-based)")
    p.add_argument("--selected", default="", help="comma-separated selected indices (0-based)")
    p.add_argument("--as-printed", action="store_true",
                   help="divide both selection counts by the total variable count")
    p.add_argument("--out", required=True, help="output JSON path")
    _add_seed(p)
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s",
                        stream=sys.stderr)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GroupselError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # numerical or unexpected failure
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
