"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 validation error, 3 metric failure.
Set ``DEIDBENCH_LOG_LEVEL`` (e.g. ``DEBUG``) for more log output.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .baselines import DpHistogramParams, deid_dp_histogram, deid_identity, deid_subsample, deid_swap
from .dataset import SubgroupSelector, read_dataset, read_dictionary, write_dataset
from .dispersal import dispersal_profile, profile_step_bounds
from .errors import MetricError, ValidationError
from .report import RunConfig, evaluate, load_config, write_table

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_METRIC = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _names(text: str) -> list:
    return [n.strip() for n in text.split(",") if n.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="deidbench", description="Evaluate deidentified tabular data.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ev = sub.add_parser("evaluate", help="score a deidentified file against its target")
    ev.add_argument("--target", required=True)
    ev.add_argument("--deid", required=True)
    ev.add_argument("--dict", required=True, dest="dictionary")
    ev.add_argument("--config", help="JSON run configuration")
    ev.add_argument("--out", required=True, help="output directory")
    ev.add_argument("--workers", type=int, default=1)

    dp = sub.add_parser("dispersal", help="dispersal profile over a feature order")
    dp.add_argument("--data", required=True)
    dp.add_argument("--dict", required=True, dest="dictionary")
    dp.add_argument("--order", required=True, type=_names, help="comma-separated features")
    dp.add_argument("--group", action="append", default=[], help="subgroup like SEX=1,RAC1P=2")
    dp.add_argument("--out", required=True, help="output directory")

    de = sub.add_parser("deid", help="produce a baseline deidentified file")
    de.add_argument("method", choices=("identity", "subsample", "swap", "dphist"))
    de.add_argument("--data", required=True)
    de.add_argument("--dict", required=True, dest="dictionary")
    de.add_argument("--fraction", type=float)
    de.add_argument("--rate", type=float)
    de.add_argument("--epsilon", type=float)
    de.add_argument("--schema", type=_names, help="features for swap or dphist")
    de.add_argument("--max-cells", type=int, default=10 ** 7)
    de.add_argument("--seed", type=int, default=0)
    de.add_argument("--out", required=True, help="output CSV file")

    va = sub.add_parser("validate", help="check a data file against its dictionary")
    va.add_argument("--data", required=True)
    va.add_argument("--dict", required=True, dest="dictionary")
    return parser


def _cmd_evaluate(args) -> int:
    dictionary = read_dictionary(args.dictionary)
    target = read_dataset(args.target, dictionary)
    deid = read_dataset(args.deid, dictionary)
    cfg = RunConfig()
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = load_config(fh.read())
    report = evaluate(target, deid, cfg, workers=args.workers)
    report.write(args.out)
    failed = [name for name, status in report.status().items() if status == "error"]
    km = report.sections["kmarginal"]
    if km["status"] == "ok":
        print(f"k-marginal score: {km['overall']['score']}")
    priv = report.sections["privacy"]
    if priv["status"] == "ok":
        print(f"unique exact match: {priv['uem']['percent']:g}%")
    print(f"report written to {args.out}")
    if failed:
        print(f"sections failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_METRIC
    return EXIT_OK


def _cmd_dispersal(args) -> int:
    dictionary = read_dictionary(args.dictionary)
    ds = read_dataset(args.data, dictionary)
    groups = [SubgroupSelector.parse(g) for g in args.group] or [SubgroupSelector()]
    profile = dispersal_profile(ds, args.order, groups)
    steps = [row for g in groups for row in profile_step_bounds(ds, args.order, g)]
    os.makedirs(args.out, exist_ok=True)
    write_table(profile.rows(), os.path.join(args.out, "dispersal_profile.csv"))
    write_table(steps, os.path.join(args.out, "dispersal_steps.csv"))
    for curve in profile.curves:
        values = ", ".join(f"{p.dispersal:g}" for p in curve.points) or curve.skipped
        print(f"{curve.label}: {values}")
    return EXIT_OK


def _cmd_deid(args) -> int:
    dictionary = read_dictionary(args.dictionary)
    ds = read_dataset(args.data, dictionary)
    if args.method == "identity":
        out = deid_identity(ds)
    elif args.method == "subsample":
        if args.fraction is None:
            raise _UsageError("deid subsample needs --fraction")
        out = deid_subsample(ds, args.fraction, args.seed)
    elif args.method == "swap":
        if args.rate is None:
            raise _UsageError("deid swap needs --rate")
        out = deid_swap(ds, args.rate, args.schema or ds.dictionary.metric_features(), args.seed)
    else:
        if args.epsilon is None:
            raise _UsageError("deid dphist needs --epsilon")
        schema = args.schema or ds.dictionary.metric_features()
        out = deid_dp_histogram(ds, DpHistogramParams(args.epsilon, schema, args.max_cells, args.seed))
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        write_dataset(out, fh)
    print(f"wrote {out.row_count} records to {args.out}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    dictionary = read_dictionary(args.dictionary)
    ds = read_dataset(args.data, dictionary)
    print(f"ok: {ds.row_count} records, {len(ds.feature_names)} features")
    return EXIT_OK


_COMMANDS = {"evaluate": _cmd_evaluate, "dispersal": _cmd_dispersal, "deid": _cmd_deid,
             "validate": _cmd_validate}


def main(argv=None) -> int:
    level = os.environ.get("DEIDBENCH_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, OSError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except MetricError as exc:
        print(f"metric error: {exc}", file=sys.stderr)
        return EXIT_METRIC


if __name__ == "__main__":
    sys.exit(main())
