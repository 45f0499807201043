"""The cli module contains the ``iwlab`` command line interface."""

import argparse
import logging
import sys
import time
import typing as t

from . import __version__
from .config import RunConfig, load_config, parse_levels
from .errors import ConfigError, IWLabError
from .scenarios import FACTORIES
from .suite import run_suite, write_artifacts
from .types import IDENTITY_NAMES


log = logging.getLogger(__name__)

EXIT_PASSED = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_IO = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iwlab",
        description=(
            "Numerically check the Itô-Wentzell formula, its real-valued version, and the"
            " stochastic Fubini theorem on manufactured scenarios."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--list", action="store_true", help="List the registered scenarios and identities."
    )
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="Log more (repeat for debug output)."
    )
    parser.add_argument("-q", "--quiet", action="store_true", help="Only log errors.")

    commands = parser.add_subparsers(dest="command")
    commands.add_parser("list", help="List the registered scenarios and identities.")

    run = commands.add_parser("run", help="Run the verification suite.")
    run.add_argument("--config", help="INI run configuration; defaults apply without one.")
    run.add_argument("--seed", type=int, help="Root seed of every bank.")
    run.add_argument("--levels", help="Grid level range A..B, e.g. 6..10.")
    run.add_argument("--replicates", type=int, help="Replicate banks per residual curve.")
    run.add_argument("--out", help="Output directory.")
    run.add_argument(
        "--dump-banks", action="store_true", default=None,
        help="Also write the finest bank of each scenario as CSV.",
    )
    return parser


def configure_logging(verbose: int = 0, quiet: bool = False) -> None:
    if quiet:
        level = logging.ERROR
    elif verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def list_entries(out: t.Optional[t.TextIO] = None) -> None:
    """Write the registered scenarios and the identity names to `out` (default stdout)."""
    out = out or sys.stdout
    out.write("scenarios:\n")
    for factory in FACTORIES:
        scenario = factory()
        out.write(
            f"  {scenario.name}  {scenario.title}"
            f" (d={scenario.dimension}, K={scenario.drivers}, T={scenario.horizon:g})\n"
        )
    out.write("identities:\n")
    for name in IDENTITY_NAMES:
        out.write(f"  {name}\n")


def make_config(args: argparse.Namespace) -> RunConfig:
    """Return the validated config of the ``run`` command: the file settings, if any, with the
    command line overrides applied."""
    config = load_config(args.config) if args.config else RunConfig()
    base_level = level_count = None
    if args.levels is not None:
        base_level, level_count = parse_levels(args.levels)
    return config.with_overrides(
        seed=args.seed,
        base_level=base_level,
        level_count=level_count,
        replicates=args.replicates,
        out=args.out,
        dump_banks=args.dump_banks,
    ).validate()


def main(argv: t.Optional[t.Sequence[str]] = None) -> int:
    """Run the command line interface and return its exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)

    if args.list or args.command == "list":
        list_entries()
        return EXIT_PASSED
    if args.command != "run":
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    try:
        config = make_config(args)
        started = time.perf_counter()
        report = run_suite(config)
        log.info("Suite finished in %.2fs", time.perf_counter() - started)
        paths = write_artifacts(report, config.out)
    except ConfigError as exc:
        print(f"iwlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"iwlab: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except IWLabError as exc:
        print(f"iwlab: error: {exc}", file=sys.stderr)
        return EXIT_FAILED

    for path in paths:
        log.info("Wrote %s", path)
    summary = report.summary()
    print(
        f"{summary['passed']}/{summary['checks']} checks passed;"
        f" suite {'PASSED' if report.passed else 'FAILED'}"
    )
    for record in report.failures:
        print(
            f"  FAIL {record.scenario} {record.identity} {record.check.name}:"
            f" {record.check.value:.6g} {record.check.tolerance}"
        )
    return EXIT_PASSED if report.passed else EXIT_FAILED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
