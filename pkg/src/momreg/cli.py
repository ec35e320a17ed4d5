"""Command line entry point.

    momreg generate   --config run.cfg --out results/
    momreg fit        --config run.cfg [--data data.csv]
    momreg cv         --config run.cfg
    momreg experiment --config run.cfg --threads 4
    momreg detect     --config run.cfg
    momreg breakdown  --config run.cfg

The output directory is ``--out``, else ``$MOMREG_OUTPUT_DIR``, else the
config's ``output_dir``. Exit status is 0 on success, 2 for an invalid
configuration and 1 for a numerical failure.
"""
import argparse
import logging
import os
import sys
from dataclasses import replace

from . import experiments
from ._io import write_csv
from .config import ConfigError, describe, parse_config, with_seed
from .dataset import ell2_error, from_csv, to_csv
from .exceptions import NumericError, ParameterError
from .tuning import mom_cv

OUTPUT_ENV = "MOMREG_OUTPUT_DIR"

log = logging.getLogger("momreg")


def _output_dir(args, config):
    return args.out or os.environ.get(OUTPUT_ENV) or config.output_dir


def _dataset(args, config):
    if args.data:
        return from_csv(args.data)
    return experiments._load(config, 0)


def cmd_generate(args, config, out):
    path = os.path.join(out, "dataset.csv")
    to_csv(experiments.repetition_data(config.gen, 0), path)
    return [path]


def cmd_fit(args, config, out):
    config = replace(config, experiment="single-fit", repetitions=1, data=args.data or config.data)
    return experiments.run(config, out, args.threads)


def cmd_cv(args, config, out):
    if config.cv is None:
        raise ConfigError("the cv verb needs a [cv] section", args.config)
    ds = _dataset(args, config)
    res = mom_cv(ds, config.solver, config.cv, args.threads)
    table = os.path.join(out, "cv_table.csv")
    res.to_csv(table)
    summary = os.path.join(out, "cv_selection.csv")
    err = ell2_error(res.estimate.t_hat, ds.truth) if ds.truth is not None else float("nan")
    write_csv(summary, ["best_K", "best_lambda", "error", "failed_fits"],
              [[res.best_K, res.best_lambda, err, len(res.failures)]])
    return [table, summary]


def cmd_experiment(args, config, out):
    return experiments.run(config, out, args.threads)


def cmd_detect(args, config, out):
    return experiments.run(replace(config, experiment="detect-outliers",
                                   data=args.data or config.data), out, args.threads)


def cmd_breakdown(args, config, out):
    return experiments.run(replace(config, experiment="breakdown"), out, args.threads)


COMMANDS = {
    "generate": cmd_generate,
    "fit": cmd_fit,
    "cv": cmd_cv,
    "experiment": cmd_experiment,
    "detect": cmd_detect,
    "breakdown": cmd_breakdown,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="momreg", description="Median-of-means sparse regression.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="configuration file")
        p.add_argument("--seed", type=int, default=None, help="override every seed in the config")
        p.add_argument("--out", default=None, help=f"output directory (default: ${OUTPUT_ENV} or output_dir)")
        p.add_argument("--threads", type=int, default=1, help="worker processes for CV grids")
        p.add_argument("--data", default=None, help="dataset CSV to use instead of generating one")
        p.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be positive")
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        config = parse_config(args.config)
        if args.seed is not None:
            config = with_seed(config, args.seed)
        if args.print_config:
            sys.stdout.write(describe(config))
            return 0
        out = _output_dir(args, config)
        os.makedirs(out, exist_ok=True)
        written = COMMANDS[args.command](args, config, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    for path in written:
        log.info("wrote %s", path)
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
