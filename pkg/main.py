# Copyright 2026 Google LLC
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
import argparse
import json
import logging
import os
import sys
from typing import Any, Optional, Sequence

from dotenv import dotenv_values, load_dotenv
load_dotenv()  # Load environment variables from .env file

import pydantic
import termcolor
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from bench import (
    ExperimentSpec,
    aggregate_records,
    append_records,
    build_experiment,
    fish_shape,
    flow_field,
    read_records,
    rms_error,
    run_experiment,
)
from formats import (
    atomic_write_text,
    read_point_cloud,
    read_truth,
    write_flow,
    write_point_cloud,
    write_truth,
)
from pointset import ColoredPointSet, RegistrationConfig, RegistrationError
from registration import baseline_cpd_register, register

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

LOG_LEVEL_ENV = "CCPD_LOG_LEVEL"

console = Console()
logger = logging.getLogger("ccpd")

# CLI flag destination -> config key.
CONFIG_FLAGS = {
    "alpha": "alpha",
    "beta": "beta",
    "lambda_": "lambda",
    "w_shape": "w_shape",
    "w_color": "w_color",
    "sigma_color": "sigma_color",
    "color_outlier_term": "color_outlier_term",
    "max_iterations": "max_iterations",
    "tolerance": "tolerance",
    "sigma_floor": "sigma_floor",
    "prenormalize": "prenormalize",
}


class UsageError(Exception):
    """Bad command line or configuration."""


class ArgumentParser(argparse.ArgumentParser):
    """Reports usage problems as UsageError instead of exiting with status 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def configure_logging() -> None:
    level = os.environ.get(LOG_LEVEL_ENV, "INFO").upper()
    if not isinstance(logging.getLevelName(level), int):
        raise UsageError(f"{LOG_LEVEL_ENV}={level} is not a logging level")
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True))],
        force=True,
    )


def load_config(path: Optional[str], overrides: dict[str, Any]) -> RegistrationConfig:
    """Reads a key=value config file, applies flag overrides and validates the result."""
    values: dict[str, Any] = {}
    if path is not None:
        if not os.path.isfile(path):
            raise UsageError(f"config file not found: {path}")
        for key, value in dotenv_values(path).items():
            if value is None:
                raise UsageError(f"{path}: '{key}' has no value")
            values[key] = value
    values.update({key: value for key, value in overrides.items() if value is not None})
    try:
        return RegistrationConfig.model_validate(values)
    except pydantic.ValidationError as e:
        raise UsageError(f"invalid configuration: {e}") from e


def config_from_args(args: argparse.Namespace, path: Optional[str]) -> RegistrationConfig:
    overrides = {key: getattr(args, dest) for dest, key in CONFIG_FLAGS.items()}
    return load_config(path, overrides)


def load_specs(path: str) -> list[ExperimentSpec]:
    """An experiment spec file holds one JSON object or a list of them."""
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    if isinstance(payload, dict):
        payload = [payload]
    return pydantic.TypeAdapter(list[ExperimentSpec]).validate_python(payload)


def load_base(args: argparse.Namespace) -> ColoredPointSet:
    if args.fish:
        return fish_shape()
    return read_point_cloud(args.base, args.format)


def run_register(args: argparse.Namespace) -> int:
    anchor = read_point_cloud(args.anchor, args.format)
    model = read_point_cloud(args.model, args.format)
    config = config_from_args(args, args.config)
    if args.method == "ccpd" and config.w_color > 0.0 and (
        anchor.color_dim == 0 or model.color_dim == 0
    ):
        logger.warning("Input has no colour channels; registering by shape alone.")
        config = config.model_copy(update={"w_color": 0.0, "color_outlier_term": False})

    runner = register if args.method == "ccpd" else baseline_cpd_register
    with console.status(
        f"Registering {model.count} model points onto {anchor.count} anchor points "
        f"({args.method})...",
        spinner_style=None,
    ):
        report = runner(anchor, model, config)

    if args.out:
        write_point_cloud(report.transformed, args.out)
    if args.flow:
        write_flow(flow_field(model, report.transformed), args.flow)

    metrics: dict[str, Any] = {
        "method": report.method,
        "iterations": report.iterations,
        "converged": report.converged,
        "sigma_color": report.sigma_color,
        "sigma_shape_trace": report.sigma_shape_trace.tolist(),
        "objective_trace": report.objective_trace.tolist(),
    }
    if args.truth:
        metrics["rms"] = rms_error(report.transformed, anchor, read_truth(args.truth))
    if args.metrics:
        atomic_write_text(args.metrics, json.dumps(metrics, indent=2) + "\n")

    termcolor.cprint(
        f"Registration finished after {report.iterations} iterations"
        f" (converged: {report.converged}).",
        color="green",
    )
    if "rms" in metrics:
        print(f"RMS: {metrics['rms']:.6e}")
    return EXIT_OK


def run_synth(args: argparse.Namespace) -> int:
    specs = load_specs(args.spec)
    if len(specs) != 1:
        raise UsageError("synth materializes exactly one experiment spec")
    anchor, model, truth = build_experiment(specs[0], load_base(args))
    write_point_cloud(anchor, args.out_anchor)
    write_point_cloud(model, args.out_model)
    write_truth(truth, args.out_truth)
    termcolor.cprint(
        f"Wrote {anchor.count} anchor points, {model.count} model points and "
        f"{len(truth.pairs)} correspondences.",
        color="green",
    )
    return EXIT_OK


def run_eval(args: argparse.Namespace) -> int:
    transformed = read_point_cloud(args.transformed, args.format)
    anchor = read_point_cloud(args.anchor, args.format)
    print(f"{rms_error(transformed, anchor, read_truth(args.truth)):.10e}")
    return EXIT_OK


def run_compare(args: argparse.Namespace) -> int:
    specs = load_specs(args.spec)
    base = load_base(args)
    config = config_from_args(args, args.config)
    cpd_config = config_from_args(args, args.cpd_config) if args.cpd_config else None

    records = []
    with console.status(f"Running {len(specs)} experiment(s)...", spinner_style=None):
        for spec in specs:
            records.append(run_experiment(spec, base, config, cpd_config))

    table = Table(expand=True)
    table.add_column("Seed", header_style="cyan")
    table.add_column("CCPD RMS", header_style="magenta", justify="right")
    table.add_column("CPD RMS", header_style="magenta", justify="right")
    for record in records:
        table.add_row(
            str(record.seed), f"{record.ccpd.rms:.4e}", f"{record.cpd.rms:.4e}"
        )
    console.print(table)

    if args.out:
        append_records(args.out, records)
        termcolor.cprint(f"Appended {2 * len(records)} records to {args.out}.", color="green")
    return EXIT_OK


def run_report(args: argparse.Namespace) -> int:
    summary = aggregate_records(read_records(args.input))
    table = Table(expand=True)
    for column in ("Condition", "Method", "Runs"):
        table.add_column(column, header_style="cyan")
    for column in ("Mean RMS", "Mean iterations", "Mean ms"):
        table.add_column(column, header_style="magenta", justify="right")
    for row in summary.itertuples(index=False):
        table.add_row(
            row.spec_hash,
            row.method,
            str(row.runs),
            f"{row.rms:.4e}",
            f"{row.iterations:.1f}",
            f"{row.milliseconds:.1f}",
        )
    console.print(table)
    return EXIT_OK


def add_config_flags(parser: argparse.ArgumentParser, cpd_config: bool = False) -> None:
    parser.add_argument("--config", help="key=value configuration file.")
    if cpd_config:
        parser.add_argument(
            "--cpd-config",
            help="Separate configuration file for the shape-only baseline.",
        )
    parser.add_argument("--alpha", type=float, help="Outlier weight in [0, 1).")
    parser.add_argument("--beta", type=float, help="Kernel width.")
    parser.add_argument("--lambda", dest="lambda_", type=float, help="Smoothness weight.")
    parser.add_argument("--w-shape", dest="w_shape", type=float)
    parser.add_argument("--w-color", dest="w_color", type=float)
    parser.add_argument(
        "--sigma-color", dest="sigma_color", help="Colour bandwidth or 'auto'."
    )
    parser.add_argument(
        "--color-outlier-term",
        dest="color_outlier_term",
        action=argparse.BooleanOptionalAction,
        default=None,
    )
    parser.add_argument("--max-iterations", dest="max_iterations", type=int)
    parser.add_argument("--tolerance", type=float)
    parser.add_argument("--sigma-floor", dest="sigma_floor", type=float)
    parser.add_argument(
        "--prenormalize", action=argparse.BooleanOptionalAction, default=None
    )


def add_base_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--base", help="Point cloud the experiment is generated from.")
    group.add_argument(
        "--fish",
        action="store_true",
        help="Use the built-in planar fish with nine hue regions.",
    )


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="ccpd", description="Non-rigid point set registration with colour."
    )
    parser.add_argument(
        "--format",
        choices=("csv", "ply", "pcd"),
        help="Input format; inferred from the file suffix by default.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    register_parser = subparsers.add_parser("register", help="Register a model onto an anchor.")
    register_parser.add_argument("--anchor", required=True)
    register_parser.add_argument("--model", required=True)
    register_parser.add_argument("--method", choices=("ccpd", "cpd"), default="ccpd")
    register_parser.add_argument("--out", help="Transformed model point cloud.")
    register_parser.add_argument("--flow", help="CSV of displacement arrows.")
    register_parser.add_argument("--metrics", help="JSON metrics file.")
    register_parser.add_argument("--truth", help="CSV of true correspondences.")
    add_config_flags(register_parser)
    register_parser.set_defaults(handler=run_register)

    synth_parser = subparsers.add_parser("synth", help="Materialize an experiment spec.")
    add_base_flags(synth_parser)
    synth_parser.add_argument("--spec", required=True)
    synth_parser.add_argument("--out-anchor", dest="out_anchor", required=True)
    synth_parser.add_argument("--out-model", dest="out_model", required=True)
    synth_parser.add_argument("--out-truth", dest="out_truth", required=True)
    synth_parser.set_defaults(handler=run_synth)

    eval_parser = subparsers.add_parser("eval", help="Print the RMS error of a result.")
    eval_parser.add_argument("--transformed", required=True)
    eval_parser.add_argument("--anchor", required=True)
    eval_parser.add_argument("--truth", required=True)
    eval_parser.set_defaults(handler=run_eval)

    compare_parser = subparsers.add_parser(
        "compare", help="Run both methods on generated experiments."
    )
    add_base_flags(compare_parser)
    compare_parser.add_argument("--spec", required=True)
    compare_parser.add_argument("--out", help="Record file to append to.")
    add_config_flags(compare_parser, cpd_config=True)
    compare_parser.set_defaults(handler=run_compare)

    report_parser = subparsers.add_parser("report", help="Summarize comparison records.")
    report_parser.add_argument("--in", dest="input", required=True)
    report_parser.set_defaults(handler=run_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        configure_logging()
        return args.handler(args)
    except UsageError as e:
        termcolor.cprint(str(e), color="red", file=sys.stderr)
        return EXIT_USAGE
    except RegistrationError as e:
        termcolor.cprint(f"Registration failed: {e}", color="red", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as e:
        termcolor.cprint(f"Data error: {e}", color="red", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
