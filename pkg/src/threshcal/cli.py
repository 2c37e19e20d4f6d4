"""``threshcal`` command-line interface.

Subcommands::

    threshcal validate  --input FILE            cleaning report and label balance
    threshcal stats     --input FILE            t-test and Mann-Whitney U, PASS vs FAIL
    threshcal threshold --input FILE --method M --level L
    threshcal crossval  [--config FILE] [--input FILE] [--out REPORT] [--plots DIR]

Results go to stdout as JSON (default) or CSV; diagnostics go to stderr.
Exit codes: 0 success, 1 usage, 2 data, 3 numeric.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import fields
from pathlib import Path

import yaml

from . import classifiers, conformal, density, recall_curve, roc, stats_tests, zscore
from .classifiers import ClassifierKind, ClassifierSettings
from .dataset import clean, label_balance, load_dataset, split_holdout
from .errors import ConfigInvalid, DataError, ThreshcalError, UsageError
from .harness import (
    DEFAULT_LEVELS,
    Method,
    MethodSpec,
    RunConfig,
    export_plot_data,
    export_report,
    run,
    write_report,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SEED_ENV = "THRESHCAL_SEED"

LEVEL_HELP = (
    "confidence level; meaning depends on the method: zscore=interval confidence, "
    "kde=posterior floor, emp-recall/pr-curve=recall target, roc-fpr=max FPR of 1-level, "
    "conformal=coverage 1-alpha"
)

DATA_KEYS = ("input", "format", "score_field", "label_field", "pass_token", "fail_token",
             "id_field", "metric_name")
RUN_KEYS = ("methods", "confidence_levels", "k_folds", "seed", "grid_step", "hist_bins",
            "kde_bandwidth", "calib_fraction", "workers")
CLASSIFIER_KEYS = tuple(f.name for f in fields(ClassifierSettings) if f.name != "seed")
OUTPUT_KEYS = ("out", "report_format", "plots", "library")
CONFIG_KEYS = frozenset(DATA_KEYS + RUN_KEYS + CLASSIFIER_KEYS + OUTPUT_KEYS)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_input_flags(p, required=True):
    p.add_argument("--input", required=required, help="CSV or JSONL score file")
    p.add_argument("--format", choices=["csv", "jsonl"], help="input format (default: from extension)")
    p.add_argument("--score-field", default=None, help="score column/key (default: score)")
    p.add_argument("--label-field", default=None, help="label column/key (default: label)")
    p.add_argument("--pass-token", default=None, help="label value meaning PASS (default: PASS)")
    p.add_argument("--fail-token", default=None, help="label value meaning FAIL (default: FAIL)")
    p.add_argument("--output-format", choices=["json", "csv"], default=None,
                   help="stdout format (default: json; csv for crossval)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="threshcal", description="Decision thresholds for continuous evaluation metrics.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="load and clean a dataset, report counts")
    _add_input_flags(p)

    p = sub.add_parser("stats", help="t-test and Mann-Whitney U between PASS and FAIL scores")
    _add_input_flags(p)
    p.add_argument("--pooled", action="store_true", help="pooled-variance t-test instead of Welch")

    p = sub.add_parser("threshold", help="one method at one level on the full dataset")
    _add_input_flags(p)
    p.add_argument("--method", required=True,
                   help="zscore|hist-min|kde|emp-recall|pr-curve|roc-fpr|youden|conformal, "
                        "optionally METHOD:CLASSIFIER")
    p.add_argument("--classifier", choices=[k.value for k in ClassifierKind], default="standard",
                   help="classifier for pr-curve/roc-fpr/conformal (default: standard)")
    p.add_argument("--level", type=float, default=0.95, help=LEVEL_HELP)
    p.add_argument("--seed", type=int, default=None, help=f"random seed (fallback: ${SEED_ENV})")

    p = sub.add_parser("crossval", help="stratified K-fold sweep over methods and levels")
    _add_input_flags(p, required=False)
    p.add_argument("--config", help="JSON or YAML run configuration")
    p.add_argument("--method", action="append", help="method to include (repeatable), optionally METHOD:CLASSIFIER")
    p.add_argument("--level", type=float, action="append", help="repeatable; " + LEVEL_HELP)
    p.add_argument("--k", type=int, dest="k_folds", help="number of folds (default: 5)")
    p.add_argument("--seed", type=int, default=None, help=f"random seed (fallback: ${SEED_ENV})")
    p.add_argument("--out", help="report path; .json writes JSON, anything else CSV (default: stdout CSV)")
    p.add_argument("--plots", help="directory for figure CSV series")
    return parser


def _resolve_seed(flag, config_value=None) -> int:
    if flag is not None:
        return int(flag)
    if config_value is not None:
        return int(config_value)
    env = os.environ.get(SEED_ENV, "").strip()
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigInvalid(f"${SEED_ENV} is not an integer: {env!r}") from None
    return 0


def load_config(path) -> dict:
    """Read a JSON/YAML config file; unknown keys are rejected."""
    path = Path(path)
    if not path.is_file():
        raise ConfigInvalid(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh) if path.suffix.lower() in (".yaml", ".yml") else json.load(fh)
        except (yaml.YAMLError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"cannot parse {path}: {exc}") from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigInvalid("config must be a mapping")
    unknown = sorted(set(doc) - CONFIG_KEYS)
    if unknown:
        raise ConfigInvalid(f"unknown config keys: {', '.join(unknown)}")
    return doc


def _load_clean(opts: dict):
    raw = load_dataset(
        opts["input"],
        format=opts.get("format"),
        score_field=opts.get("score_field") or "score",
        label_field=opts.get("label_field") or "label",
        pass_token=opts.get("pass_token") or "PASS",
        fail_token=opts.get("fail_token") or "FAIL",
        id_field=opts.get("id_field") or "id",
        metric_name=opts.get("metric_name"),
    )
    return clean(raw)


def _input_opts(args) -> dict:
    return {
        "input": args.input,
        "format": args.format,
        "score_field": args.score_field,
        "label_field": args.label_field,
        "pass_token": args.pass_token,
        "fail_token": args.fail_token,
    }


def _emit(obj, fmt: str, out=None):
    out = out or sys.stdout
    if fmt == "json":
        json.dump(_finite_or_none(obj), out, indent=2, default=_json_default, allow_nan=False)
        out.write("\n")
        return
    writer = csv.writer(out, lineterminator="\n")
    rows = obj if isinstance(obj, list) else [obj]
    header = list(rows[0].keys())
    writer.writerow(header)
    for r in rows:
        writer.writerow([r.get(k, "") for k in header])


def _finite_or_none(obj):
    # strict JSON has no NaN/Infinity
    if isinstance(obj, dict):
        return {k: _finite_or_none(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite_or_none(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _json_default(o):
    if hasattr(o, "item"):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    dataset, report = _load_clean(_input_opts(args))
    balance = label_balance(dataset)
    if args.output_format == "json":
        _emit({"cleaning": report.to_dict(), "label_balance": balance}, "json")
    else:
        _emit({**report.to_dict(), "n_pass": balance["PASS"], "n_fail": balance["FAIL"]}, "csv")
    return EXIT_OK


def cmd_stats(args) -> int:
    dataset, _ = _load_clean(_input_opts(args))
    counts = label_balance(dataset)
    if counts["PASS"] == 0 or counts["FAIL"] == 0:
        raise DataError("stats need both PASS and FAIL records")
    results = stats_tests.compare_labels(dataset, equal_variance=args.pooled)
    rows = [r.to_dict() for r in results.values()]
    _emit(rows if args.output_format == "csv" else results_to_json(results), args.output_format)
    return EXIT_OK


def results_to_json(results):
    return {name: r.to_dict() for name, r in results.items()}


def _single_threshold(dataset, spec: MethodSpec, level: float, seed: int) -> dict:
    out = {"method": spec.method.value, "classifier": spec.classifier_name, "level": level}
    m = spec.method
    settings = ClassifierSettings(seed=seed)
    if m is Method.ZSCORE:
        iv = zscore.z_interval(dataset.scores, level)
        out.update(threshold=iv.lower, lower=iv.lower, upper=iv.upper, mean=iv.mean, std_dev=iv.std_dev)
        out.update(metric_name="recall", metric_value=recall_curve.recall_at(dataset, iv.lower))
        return out
    if m is Method.CONFORMAL:
        fit_part, calib_part = split_holdout(dataset, 0.5, seed)
        model = classifiers.fit_classifier(fit_part, spec.classifier, settings)
        cal = conformal.calibrate(model, calib_part)
        Q = conformal.conformal_quantile(cal, 1.0 - level)
        ev = conformal.evaluate(cal, Q, calib_part, 1.0 - level)
        out.update(threshold=ev.threshold_score, quantile=Q, metric_name="coverage",
                   metric_value=ev.coverage, avg_width=ev.avg_width)
        return out
    if m is Method.HIST_MIN:
        t = density.histogram_local_min_threshold(dataset.scores)
    elif m is Method.KDE:
        t = density.kde_threshold(dataset, level)
    elif m is Method.EMP_RECALL:
        t = recall_curve.recall_threshold(dataset, level)
    elif m is Method.YOUDEN:
        t = roc.youden_threshold(roc.roc_curve(dataset.scores, dataset.y))
    else:
        model = classifiers.fit_classifier(dataset, spec.classifier, settings)
        probs = classifiers.predict_prob(model, dataset.scores)
        if m is Method.PR_CURVE:
            p_cut, _, _ = roc.threshold_at_recall(probs, dataset.y, level)
        else:
            p_cut = roc.threshold_at_fpr(roc.roc_curve(probs, dataset.y), 1.0 - level)
        out["probability_threshold"] = p_cut
        t = classifiers.invert_probability_threshold(model, p_cut).canonical_threshold
    out.update(threshold=t, metric_name="recall", metric_value=recall_curve.recall_at(dataset, t))
    return out


def cmd_threshold(args) -> int:
    if not 0.0 < args.level < 1.0:
        raise UsageError(f"--level must be in (0, 1), got {args.level}")
    specs = MethodSpec.parse_many(args.method)
    spec = specs[0]
    if ":" not in args.method and spec.method.needs_classifier:
        spec = MethodSpec(spec.method, ClassifierKind(args.classifier))
    dataset, _ = _load_clean(_input_opts(args))
    result = _single_threshold(dataset, spec, args.level, _resolve_seed(args.seed))
    _emit(result, args.output_format)
    return EXIT_OK


def _merged_options(args) -> dict:
    opts = load_config(args.config) if args.config else {}
    for key, value in _input_opts(args).items():
        if value is not None:
            opts[key] = value
    if args.method:
        opts["methods"] = args.method
    if args.level:
        opts["confidence_levels"] = args.level
    if args.k_folds is not None:
        opts["k_folds"] = args.k_folds
    if args.out:
        opts["out"] = args.out
    if args.plots:
        opts["plots"] = args.plots
    opts["seed"] = _resolve_seed(args.seed, opts.get("seed"))
    if not opts.get("input"):
        raise UsageError("no input file (use --input or the config's 'input' key)")
    return opts


def run_config_from(opts: dict) -> RunConfig:
    clf = ClassifierSettings(
        **{k: opts[k] for k in CLASSIFIER_KEYS if k in opts}, seed=int(opts.get("seed", 0))
    )
    kwargs = {k: opts[k] for k in RUN_KEYS if k in opts}
    if isinstance(kwargs.get("methods"), str):
        kwargs["methods"] = [kwargs["methods"]]
    if "confidence_levels" not in kwargs:
        kwargs["confidence_levels"] = DEFAULT_LEVELS
    try:
        return RunConfig(**kwargs, classifier=clf)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(str(exc)) from None


def cmd_crossval(args) -> int:
    opts = _merged_options(args)
    config = run_config_from(opts)
    dataset, _ = _load_clean(opts)
    report = run(config, dataset)
    out = opts.get("out")
    if out:
        fmt = opts.get("report_format") or ("json" if str(out).lower().endswith(".json") else "csv")
        export_report(report, fmt, out)
        print(f"wrote {out}", file=sys.stderr)
    else:
        write_report(report, args.output_format or opts.get("report_format") or "csv", sys.stdout)
    if opts.get("plots"):
        where = export_plot_data(dataset, config, opts["plots"], opts.get("library"))
        print(f"wrote plot series to {where}", file=sys.stderr)
    failures = sum(r.failed for r in report.rows)
    if failures:
        print(f"{failures} fold rows fell back to threshold 0 (see 'failed' in the JSON report)",
              file=sys.stderr)
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "stats": cmd_stats,
    "threshold": cmd_threshold,
    "crossval": cmd_crossval,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command != "crossval" and args.output_format is None:
        args.output_format = "json"
    try:
        return COMMANDS[args.command](args)
    except ThreshcalError as exc:
        print(f"threshcal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"threshcal: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        print(f"threshcal: unreadable input: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as exc:
        print(f"threshcal: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
