# Global imports
import argparse
import logging
import os
import sys
import time
from typing import List

from jumpfisher import __version__
from jumpfisher.commands import command_handlers
from jumpfisher.errors import JumpFisherError
from jumpfisher.helpers import ensure_dir, file_digest, set_logger, write_json
from jumpfisher.model.parameters_model import RunManifest


def _add_run_arguments(parser: argparse.ArgumentParser, stop: bool = True) -> None:
    parser.add_argument(
        "--model",
        required=False,
        metavar="NAME",
        help="Built-in model (see 'jumpfisher model list')",
        type=str,
    )
    parser.add_argument(
        "--set",
        required=False,
        metavar="name=value,...",
        help="Override model parameters",
        type=str,
    )
    parser.add_argument(
        "--param", required=False, help="Parameter to estimate", type=str
    )
    parser.add_argument(
        "--trajectories", required=False, help="Number of trajectories", type=int
    )
    parser.add_argument(
        "--grid-points",
        required=False,
        help="Points of the waiting-time tables",
        type=int,
    )
    parser.add_argument(
        "--dtheta", required=False, help="Finite-difference step", type=float
    )
    if stop:
        group = parser.add_mutually_exclusive_group()
        group.add_argument(
            "--stop-jumps", required=False, help="Jumps per record", type=int
        )
        group.add_argument(
            "--stop-time", required=False, help="Duration of each record", type=float
        )


def get_common_parser() -> argparse.ArgumentParser:

    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--seed", required=False, help="Master seed", type=int)
    parser.add_argument(
        "--threads", required=False, help="Worker threads", type=int
    )
    parser.add_argument(
        "--out-dir",
        required=False,
        default=".",
        metavar="DIR",
        help="Output directory",
        type=str,
    )
    parser.add_argument(
        "--config",
        required=False,
        metavar="config.json",
        help="JSON file with a model and run settings",
        type=str,
    )
    parser.add_argument(
        "--log-file", required=False, help="Also log to this file", type=str
    )
    parser.add_argument(
        "--debug",
        help="set the logging level to debug",
        required=False,
        default=False,
        action="store_true",
    )
    return parser


def get_parser() -> argparse.ArgumentParser:

    parser = argparse.ArgumentParser(
        description=(
            "Fisher information and parameter estimation from quantum jump records"
        )
    )
    common = get_common_parser()
    subparsers = parser.add_subparsers(dest="command")

    simulate = subparsers.add_parser(
        "simulate", help="Sample measurement records", parents=[common]
    )
    _add_run_arguments(simulate)

    fisher = subparsers.add_parser(
        "fisher", help="Fisher information", parents=[common]
    )
    _add_run_arguments(fisher)
    fisher.add_argument(
        "--mode",
        choices=["renewal", "gillespie", "rate", "matrix", "compressed"],
        default="renewal",
    )
    fisher.add_argument(
        "--sweep",
        required=False,
        metavar="name=start:stop:count",
        help="Sweep a model parameter (renewal and rate modes)",
        type=str,
    )
    fisher.add_argument(
        "--params",
        required=False,
        metavar="a,b",
        help="Parameters of the Fisher matrix",
        type=str,
    )
    fisher.add_argument(
        "--compression",
        required=False,
        choices=["channels-only", "times-only", "sample-mean", "partial-monitoring"],
    )
    fisher.add_argument("--retain", required=False, metavar="a,b", type=str)
    fisher.add_argument("--efficiency", required=False, metavar="a=0.5", type=str)
    fisher.add_argument(
        "--series",
        help="Also write per-trajectory tr(xi) series",
        required=False,
        action="store_true",
    )

    estimate = subparsers.add_parser(
        "estimate", help="Estimation study", parents=[common]
    )
    _add_run_arguments(estimate)
    estimate.add_argument(
        "--records", required=False, metavar="records.jsonl", type=str
    )
    estimate.add_argument(
        "--estimator", choices=["mle", "mle-renewal", "mean-wait"], default="mle"
    )
    estimate.add_argument(
        "--interval", required=False, metavar="low:high", type=str
    )
    estimate.add_argument("--fisher-per-record", required=False, type=float)

    compress = subparsers.add_parser(
        "compress", help="Data compression study", parents=[common]
    )
    _add_run_arguments(compress)
    compress.add_argument("--modes", required=False, metavar="a,b", type=str)
    compress.add_argument("--retain", required=False, metavar="a,b", type=str)
    compress.add_argument("--efficiency", required=False, metavar="a=0.5", type=str)

    model = subparsers.add_parser(
        "model", help="Built-in models", parents=[common]
    )
    model.add_argument("action", choices=["list", "describe"])
    model.add_argument("name", nargs="?")
    model.add_argument("--set", required=False, type=str)

    return parser


def valid_arguments(arguments: dict) -> bool:

    if not arguments.get("command"):
        logging.error(
            "Missing command\n"
            "  jumpfisher fisher --model resonant-fluorescence --param Omega\n"
            "  jumpfisher model list"
        )
        return False

    if arguments["command"] in ("simulate", "compress") or (
        arguments["command"] == "fisher" and arguments["mode"] != "renewal"
    ):
        if arguments.get("stop_jumps") is None and arguments.get("stop_time") is None:
            logging.error(f"{arguments['command']} needs --stop-jumps or --stop-time")
            return False

    if arguments["command"] != "model":
        ensure_dir(arguments["out_dir"])
    return True


def write_manifest(arguments: dict, outputs: dict, wall_time: float) -> str:
    config = {
        key: value
        for key, value in arguments.items()
        if key not in ("debug", "log_file")
    }
    manifest = RunManifest(
        command=arguments["command"],
        config=config,
        seed=arguments.get("settings", {}).get("seed", 0),
        version=__version__,
        wall_time=wall_time,
        outputs={
            os.path.basename(path): file_digest(path) for path in outputs.values()
        },
    )
    return write_json(
        os.path.join(arguments["out_dir"], "manifest.json"), manifest.model_dump()
    )


def main(argv: List[str] = sys.argv[1:]) -> int:
    print(f"-- jumpfisher v{__version__} --")

    # cli interface
    parser = get_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return err.code
    arguments = vars(args)

    if arguments.get("debug"):
        set_logger(log_file=arguments.get("log_file"), log_level=logging.DEBUG)
    else:
        set_logger(log_file=arguments.get("log_file"), log_level=logging.INFO)

    if not valid_arguments(arguments=arguments):
        return 2

    start = time.perf_counter()
    try:
        outputs = command_handlers[arguments["command"]](arguments)
    except JumpFisherError as err:
        logging.error(str(err))
        return err.exit_code

    if outputs:
        write_manifest(arguments, outputs, time.perf_counter() - start)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
