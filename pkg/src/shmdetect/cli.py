"""Command-line entry point: ``shmdetect {generate,train,score,fdd,report}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import bundle as bundle_io
from . import pipeline
from .config import STRATEGIES, load_config
from .errors import ConfigError, DataError, NumericalError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2 by default; usage errors are 1 here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat TOML run configuration")
    common.add_argument("--seed", type=int, help="override the run seed "
                        "(for generate: the data seed)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="shmdetect", description="VAE + one-class SVM vibration damage detection")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="simulate the synthetic scenario ladder")
    g.add_argument("--out", type=Path, required=True, help="dataset directory to write")

    t = sub.add_parser("train", parents=[common], help="fit one detector per sensor")
    t.add_argument("--data", type=Path, required=True)
    t.add_argument("--bundle", type=Path, required=True, help="model bundle to write")
    t.add_argument("--out", type=Path, help="directory for search trial histories")
    mode = t.add_mutually_exclusive_group()
    mode.add_argument("--fast", dest="fast", action="store_true", default=None,
                      help="fixed configuration, no search (default)")
    mode.add_argument("--search", dest="fast", action="store_false",
                      help="run the cross-validated hyperparameter search")
    t.add_argument("--trials", type=int, help="trial budget for both search stages")
    t.add_argument("--strategy", choices=STRATEGIES)
    t.add_argument("--ae-baseline", action="store_true",
                   help="deterministic autoencoder instead of the VAE")

    s = sub.add_parser("score", parents=[common], help="PoD and KL tables from a bundle")
    s.add_argument("--bundle", type=Path, required=True)
    s.add_argument("--data", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)

    f = sub.add_parser("fdd", parents=[common], help="frequency domain decomposition baseline")
    f.add_argument("--data", type=Path, required=True)
    f.add_argument("--out", type=Path, required=True)

    r = sub.add_parser("report", parents=[common], help="collect existing tables into report.txt")
    r.add_argument("--out", type=Path, required=True)
    return p


def _config(args):
    overrides = {}
    if args.seed is not None:
        overrides["data_seed" if args.command == "generate" else "seed"] = args.seed
    if getattr(args, "fast", None) is not None:
        overrides["fast"] = args.fast
    if getattr(args, "trials", None) is not None:
        overrides["vae_trials"] = overrides["ocsvm_trials"] = args.trials
    if getattr(args, "strategy", None) is not None:
        overrides["strategy"] = args.strategy
    if getattr(args, "ae_baseline", False):
        overrides["vae_mode"] = "deterministic"
    return load_config(args.config, **overrides)


def run(args) -> int:
    if args.command == "report":
        print(pipeline.assemble_report(args.out), end="")
        return EXIT_OK
    if args.command == "score":
        model = bundle_io.load(args.bundle)
        report, kl = pipeline.score(model, args.data, args.out)
        print(report.to_text(), end="")
        return EXIT_OK
    config = _config(args)
    if args.command == "generate":
        manifest = pipeline.generate(config, args.out)
        print(f"wrote {len(manifest['scenarios'])} scenarios to {args.out}")
    elif args.command == "train":
        model = pipeline.train(config, args.data, args.out)
        bundle_io.save(model, args.bundle)
        print(f"trained {len(model.detectors)} sensor models -> {args.bundle}")
    elif args.command == "fdd":
        table = pipeline.run_fdd(config, args.data, args.out)
        print(table.to_text(), end="")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
