"""Command-line front end: ``prep``, ``summary``, ``analyze``, ``predict``.

Every option may also come from a JSON config file (``--config``) using
the option name with dashes turned into underscores; flags on the command
line win.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .dataset import (
    DatasetError, Scale, parse_dataset, parse_schema, summarize, write_dataset, write_schema,
)
from .evaluation import (
    compare_report, estimates_csv, grid_search, make_folds, parse_grid,
)
from .osr import InfeasibleError, ParameterCombo, fit_discretizers, osr_predict, pairing_table
from .preprocess import (
    apply_category_mapping, count_remapped, detect_outliers_iqr, drop_high_missing_projects,
    flags_to_csv, flags_to_text, parse_mapping, parse_split_rule, select_variables, split_variable,
)
from .stats import DEFAULT_SEED, BootstrapConfig, describe

log = logging.getLogger("osrkit")

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE = 0, 1, 2

DEFAULTS = {
    "max_missing": 0.9,
    "project_missing": 0.6,
    "k_outlier": 1.5,
    "k_extreme": 3.0,
    "grid": "default",
    "folds": "loocv",
    "alpha": 0.05,
    "draws": 1000,
    "seed": DEFAULT_SEED,
    "jobs": 1,
    "label": "data",
    "out": ".",
}
PREDICT_COMBO = "single:(Mean,MSD,10,3)"


def _read(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read file: {exc.strerror}", source=path) from None


def _merge_config(args: argparse.Namespace) -> argparse.Namespace:
    config = {}
    if args.config:
        try:
            config = json.loads(_read(args.config))
        except json.JSONDecodeError as exc:
            raise DatasetError(f"invalid JSON: {exc.msg}", row=exc.lineno, source=args.config) from None
    for key, value in vars(args).items():
        if value is None or value == []:
            if key in config:
                setattr(args, key, config[key])
            elif key in DEFAULTS:
                setattr(args, key, DEFAULTS[key])
    return args


def _load(args):
    if not args.data or not args.schema:
        raise DatasetError("--data and --schema are required")
    schema = parse_schema(_read(args.schema), source=args.schema)
    return parse_dataset(_read(args.data), schema, source=args.data)


def _names(values):
    out = []
    for v in values or []:
        out += [s.strip() for s in str(v).split(",") if s.strip()]
    return out


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _bootstrap(args) -> BootstrapConfig:
    return BootstrapConfig(draws=int(args.draws), alpha=float(args.alpha), seed=int(args.seed))


def _run_header(args, command) -> str:
    return (f"# osrkit {__version__} {command} seed={int(args.seed)} draws={int(args.draws)} "
            f"alpha={float(args.alpha)} folds={args.folds}\n")


# -- commands -------------------------------------------------------------

def cmd_prep(args) -> int:
    d = _load(args)
    notes = []
    if args.mapping:
        mapping = parse_mapping(_read(args.mapping), source=args.mapping)
        changed = count_remapped(d, mapping)
        d = apply_category_mapping(d, mapping)
        notes.append(f"remapped {changed} cells")
    for path in _names(args.splits):
        rule = parse_split_rule(_read(path), source=path)
        d = split_variable(d, rule)
        notes.append(f"split {rule.source_variable} into {rule.target_a}, {rule.target_b}")
    before = len(d)
    d = drop_high_missing_projects(d, float(args.project_missing))
    if len(d) < before:
        notes.append(f"dropped {before - len(d)} projects with more than "
                     f"{100 * float(args.project_missing):g}% missing characteristics")
    d, report = select_variables(d, float(args.max_missing), True, _names(args.drop))
    flags = []
    for name in _names(args.outlier_var):
        flags += detect_outliers_iqr(d, name, float(args.k_outlier), float(args.k_extreme))
    if args.drop_outliers and flags:
        flagged = {f.project_id for f in flags}
        d = d.without(flagged)
        notes.append(f"removed {len(flagged)} flagged projects")

    out = _out_dir(args)
    (out / "cleaned.csv").write_text(write_dataset(d), encoding="utf-8")
    (out / "cleaned.schema").write_text(write_schema(d.variables), encoding="utf-8")
    (out / "selection.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "selection.txt").write_text(report.to_text(), encoding="utf-8")
    (out / "outliers.csv").write_text(flags_to_csv(flags), encoding="utf-8")
    (out / "outliers.txt").write_text(flags_to_text(flags), encoding="utf-8")
    (out / "prep.txt").write_text("".join(n + "\n" for n in notes), encoding="utf-8")
    for n in notes:
        print(n)
    print(summarize(d).table_line())
    return EXIT_OK


def cmd_summary(args) -> int:
    d = _load(args)
    continuous = [v.name for v in d.variables if v.scale is Scale.CONTINUOUS]
    if not continuous:
        raise DatasetError("dataset has no continuous variables")
    print(summarize(d).table_line())
    rows, flags = [], []
    for name in continuous:
        values = [v for v in d.column(name) if v is not None]
        if not values:
            continue
        rows.append(describe(values).csv_row(name))
        if len(values) >= 4:
            flags += detect_outliers_iqr(d, name, float(args.k_outlier), float(args.k_extreme))
    box = "# sd is the population standard deviation\nvariable,n,min,q1,median,q3,max,mean,sd\n"
    box += "".join(r + "\n" for r in rows)
    out = _out_dir(args)
    (out / "box_summary.csv").write_text(box, encoding="utf-8")
    (out / "outliers.csv").write_text(flags_to_csv(flags), encoding="utf-8")
    sys.stdout.write(flags_to_text(flags))
    return EXIT_OK


def cmd_analyze(args) -> int:
    d = _load(args)
    if d.dependent is None:
        raise DatasetError("schema declares no dependent variable")
    if not args.size_var:
        raise DatasetError("--size-var is required for the regression baseline")
    grid = parse_grid(args.grid, bool(args.allow_any_pairing))
    cfg = _bootstrap(args)
    plan = make_folds(d.ids, args.folds, int(args.seed))
    report, lra = grid_search(d, grid, plan, cfg, jobs=int(args.jobs), size_var=args.size_var)
    header = _run_header(args, "analyze")
    comparison = compare_report(report, lra, args.label, header)

    out = _out_dir(args)
    (out / "grid_report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "comparison.txt").write_text(comparison.to_text(), encoding="utf-8")
    (out / "comparison.csv").write_text(comparison.to_csv(), encoding="utf-8")
    (out / "estimates.csv").write_text(
        estimates_csv(list(report.results) + [lra], header), encoding="utf-8")
    sys.stdout.write(comparison.to_text())
    failed = [r for r in report.results if r.error]
    for r in failed:
        print(f"infeasible {r.combo.label}: {r.error}", file=sys.stderr)
    return EXIT_INFEASIBLE if len(failed) == len(report.results) else EXIT_OK


def _parse_target(args, training):
    text = _read(args.target)
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if len(rows) != 2:
        raise DatasetError("target file must hold a header and exactly one row", source=args.target)
    header, values = rows
    if len(header) != len(values):
        raise DatasetError("row width differs from header", row=2, source=args.target)
    known = set(training.names)
    for name in header[1:]:
        if name not in known:
            raise DatasetError("unknown variable in target", row=1, column=name, source=args.target)
    sub = [training.spec(n) for n in header[1:]]
    parsed = parse_dataset(text, sub, source=args.target)
    target = {n: None for n in training.names}
    target.update(parsed.row_dict(0))
    return parsed.ids[0], target


def cmd_predict(args) -> int:
    d = _load(args)
    if not args.target:
        raise DatasetError("--target is required")
    grid = parse_grid(args.grid if args.grid != "default" else PREDICT_COMBO,
                      bool(args.allow_any_pairing))
    if len(grid) != 1:
        raise DatasetError("predict takes exactly one parameter combo")
    combo: ParameterCombo = grid[0]
    pid, target = _parse_target(args, d)
    training = d.without([pid])
    cfg = _bootstrap(args)
    pred = osr_predict(training, target, combo, cfg, fit_discretizers(training, combo.min_set_size))
    models = " | ".join(
        (" AND ".join(str(p) for p in m.predicates) or "all projects") + f" (n={m.dispersion.n})"
        for m in pred.models)
    print(f"# osrkit {__version__} predict seed={cfg.seed} draws={cfg.draws} alpha={cfg.alpha} "
          f"combo={combo.label}")
    print(f"{round(pred.estimate, 6)}, model: {models}")
    for m in pred.models:
        print(f"  {m.render()}")
    if pred.fallback:
        print(f"warning: no admissible reduction; the estimate uses all {len(training)} "
              f"training projects (low confidence)")
    if args.out and args.out != DEFAULTS["out"]:
        (_out_dir(args) / "prediction.json").write_text(pred.to_json() + "\n", encoding="utf-8")
    return EXIT_OK


# -- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="osrkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with option defaults")
        p.add_argument("--data", help="dataset CSV (first column = project id)")
        p.add_argument("--schema", help="schema file: name,scale,role per line")
        p.add_argument("--out", help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")

    def thresholds(p):
        p.add_argument("--k-outlier", type=float, help="outlier fence multiple of the IQR (1.5)")
        p.add_argument("--k-extreme", type=float, help="extreme fence multiple of the IQR (3.0)")

    def analysis(p):
        p.add_argument("--grid", help="'default', 'single:(Mean,MSD,10,3)' or '(..);(..)'")
        p.add_argument("--allow-any-pairing", action="store_true", default=None,
                       help="accept prediction/objective pairings outside the standard three")
        p.add_argument("--folds", help="loocv or k:N")
        p.add_argument("--alpha", type=float, help="bootstrap significance level (0.05)")
        p.add_argument("--draws", type=int, help="bootstrap draws (1000)")
        p.add_argument("--seed", type=int, help=f"master seed ({DEFAULT_SEED})")

    p = sub.add_parser("prep", help="clean and select data")
    common(p)
    thresholds(p)
    p.add_argument("--mapping", help="CSV variable,old_label,new_label")
    p.add_argument("--splits", action="append", help="split-rule CSV (repeatable)")
    p.add_argument("--drop", action="append", help="redundant variables (comma list, repeatable)")
    p.add_argument("--max-missing", type=float, help="drop variables this share missing (0.9)")
    p.add_argument("--project-missing", type=float,
                   help="drop projects with more than this share missing (0.6)")
    p.add_argument("--outlier-var", action="append", help="continuous variable to box-plot screen")
    p.add_argument("--drop-outliers", action="store_true", default=None,
                   help="remove projects flagged as outlier or extreme")
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("summary", help="#P #C MD line and box-plot summaries")
    common(p)
    thresholds(p)
    p.set_defaults(func=cmd_summary)

    p = sub.add_parser("analyze", help="grid search OSR against the regression baseline")
    common(p)
    analysis(p)
    p.add_argument("--size-var", help="size variable for the regression baseline")
    p.add_argument("--label", help="data set label used in the report")
    p.add_argument("--jobs", type=int, help="worker processes (1)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("predict", help="estimate one project and show its OSR model")
    common(p)
    analysis(p)
    p.add_argument("--target", help="CSV with a header and one project row")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        args = _merge_config(args)
        return args.func(args)
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DatasetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if "pairing" in str(exc) and pairing_table() not in str(exc):
            print(pairing_table(), file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
