"""Command line entry point: ``thetanls {simulate,converge,invariants,selftest}``.

Exit status: 0 on success, 1 on usage or configuration errors (the config
schema is printed), 2 on numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

from .config import SCHEMA, ConfigError, ExperimentConfig, load_config, parse_config
from .diagnostics import trajectory_csv
from .harness import (ExperimentFailure, invariant_experiment, reduce_ensemble, run_ensemble,
                      strong_error_experiment)
from .scheme import NumericalFailure, theta_label

log = logging.getLogger("thetanls")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n\n{SCHEMA}")
        raise SystemExit(EXIT_USAGE)


def _emit(text: str, cfg: ExperimentConfig) -> None:
    if cfg.output_csv in ("", "-"):
        sys.stdout.write(text)
    else:
        Path(cfg.output_csv).write_text(text)
        log.info("wrote %s", cfg.output_csv)


def cmd_simulate(cfg: ExperimentConfig) -> int:
    parts = []
    for policy in cfg.scheme.thetas:
        results = run_ensemble(cfg, policy)
        if cfg.mc.realizations == 1:
            if results[0] is None:
                raise NumericalFailure(f"theta={theta_label(policy)}: trajectory failed")
            text = trajectory_csv(results[0])
            if len(cfg.scheme.thetas) > 1:
                text = f"# theta={theta_label(policy)}\n" + text
            parts.append(text)
        else:
            from .diagnostics import ensemble_csv

            label = f"theta={theta_label(policy)}"
            parts.append(ensemble_csv(reduce_ensemble(results, label), label))
    _emit("".join(parts), cfg)
    return EXIT_OK


def cmd_converge(cfg: ExperimentConfig) -> int:
    parts, summary = [], []
    for policy in cfg.scheme.thetas:
        table = strong_error_experiment(cfg, policy)
        text = table.to_csv()
        if len(cfg.scheme.thetas) > 1:
            text = f"# theta={table.theta}\n" + text
        parts.append(text)
        summary.append(f"# theta={table.theta} order={table.fitted_order:.4f} "
                       f"residual={table.fit_residual:.2e}\n")
    _emit("".join(parts), cfg)
    sys.stdout.write("".join(summary))
    return EXIT_OK


def cmd_invariants(cfg: ExperimentConfig) -> int:
    report = invariant_experiment(cfg)
    _emit(report.csv, cfg)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="thetanls", description="theta-scheme solver for the stochastic cubic "
                "Schroedinger equation", epilog="Print the config schema with: thetanls simulate --help-config")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in [("simulate", "one trajectory or an ensemble; diagnostics CSV"),
                        ("converge", "strong-error table and fitted order"),
                        ("invariants", "ensemble mass / Hamiltonian curves")]:
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="config file (section.key = value lines)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key; repeatable")
        sp.add_argument("--help-config", action="store_true", help="print the config schema")
    sub.add_parser("selftest", help="run the built-in oracle checks")
    return p


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "help_config", False):
        sys.stdout.write(SCHEMA)
        return EXIT_OK
    if args.command == "selftest":
        from .selftest import run_selftest

        return EXIT_OK if run_selftest() else EXIT_NUMERICAL

    try:
        if args.config:
            cfg = load_config(args.config, args.set)
        else:
            cfg = parse_config("", "<defaults>", args.set)
    except ConfigError as exc:
        sys.stderr.write(f"thetanls: {exc}\n\n{SCHEMA}")
        return EXIT_USAGE

    handler = {"simulate": cmd_simulate, "converge": cmd_converge,
               "invariants": cmd_invariants}[args.command]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("once")
            return handler(cfg)
    except (NumericalFailure, ExperimentFailure) as exc:
        sys.stderr.write(f"thetanls: numerical failure: {exc}\n")
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(run_cli())
