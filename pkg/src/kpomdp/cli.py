"""Command-line entry point.

Subcommands: collect, train, run, verify, defaults. Exit status is 0 on
success, 1 when verification fails, 2 on configuration errors.
"""

import argparse
import sys

from . import harness
from .config import default_config, load_config
from .exceptions import ConfigError


def _load(args):
    if args.config:
        return load_config(args.config)
    return default_config()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="kpomdp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_collect = sub.add_parser("collect", help="collect datasets for every sweep size")
    p_collect.add_argument("--config", help="experiment config file (INI)")

    p_train = sub.add_parser("train", help="train and persist kernel models")
    p_train.add_argument("--config", help="experiment config file (INI)")

    p_run = sub.add_parser("run", help="run the benchmark sweep")
    p_run.add_argument("--config", help="experiment config file (INI)")
    p_run.add_argument("--results", default="results.csv", help="output CSV path")
    p_run.add_argument("--plot", default=None, help="optional plot image path")

    p_verify = sub.add_parser("verify", help="run the fast self-check suite")
    p_verify.add_argument("--config", help="experiment config file (INI)")

    sub.add_parser("defaults", help="print the default configuration")

    args = parser.parse_args(argv)
    try:
        if args.command == "defaults":
            harness.cmd_defaults()
            return 0
        cfg = _load(args)
        if args.command == "collect":
            harness.cmd_collect(cfg)
            return 0
        if args.command == "train":
            harness.cmd_train(cfg)
            return 0
        if args.command == "run":
            harness.cmd_run(cfg, args.results, args.plot)
            return 0
        if args.command == "verify":
            return 0 if harness.cmd_verify(cfg) else 1
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
