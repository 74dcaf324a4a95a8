#!/usr/bin/env python3

"""
_cli.py
mfglab - numerical laboratory for finite-state master equations

Copyright 2026 mfg-lab contributors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

import mfglab
from mfglab._scenarios import EXIT_CONFIG, ScenarioConfig, get_scenario, list_scenarios, run_scenario


class VAction(argparse.Action):
    def __call__(
        self,
        parser: argparse.Namespace,
        args: tuple,
        values: str,
        option_string: str = None,
    ) -> None:
        if values is None:
            values = "1"
        try:
            values = int(values)
        except ValueError:
            values = values.count("v") + 1
        setattr(args, self.dest, values)


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="mfg-lab", description="Numerical laboratory for finite-state master equations"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {mfglab.__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run one scenario from a JSON config")
    run.add_argument("--config", required=True, help="scenario config file")
    run.add_argument("--out", help="output directory, overrides out_dir of the config")
    run.add_argument("--seed", type=int, help="unsigned 64-bit seed, overrides the config seed")
    run.add_argument(
        "--threads",
        type=int,
        help="worker threads for Monte Carlo paths and lambda rows. "
        "Defaults to MFG_LAB_THREADS or 1",
    )
    run.add_argument(
        "-v",
        "--verbose",
        default=0,
        nargs="?",
        action=VAction,
        dest="verbose",
        help="set verbose mode. If set to 1, log solver progress. "
        "If set to 2, trace every solver step",
    )

    commands.add_parser("list", help="print the scenario catalog")

    show = commands.add_parser("show", help="print the default parameters of a scenario")
    show.add_argument("scenario", help="scenario name")

    return parser.parse_args(argv)


_stream_handler: Optional[logging.Handler] = None


def _configure_logging(verbose: int) -> None:
    global _stream_handler
    if verbose > 1:
        mfglab.enableTrace(True)
        return
    logger = logging.getLogger("mfglab")
    if _stream_handler is None:
        _stream_handler = logging.StreamHandler()
        logger.addHandler(_stream_handler)
    logger.setLevel(logging.INFO if verbose == 1 else logging.WARNING)


def _run(args: argparse.Namespace) -> int:
    _configure_logging(args.verbose)
    try:
        config = ScenarioConfig.from_file(args.config)
        if args.seed is not None:
            config = ScenarioConfig.from_dict(
                {"scenario": config.scenario, "seed": args.seed, "params": config.params, "out_dir": config.out_dir}
            )
        if args.out:
            config.out_dir = args.out
        if args.threads is not None:
            mfglab.setdefaultthreads(args.threads)
    except mfglab.ConfigException as e:
        sys.stderr.write(f"mfg-lab: {e}\n")
        if e.valid_names:
            sys.stderr.write("valid names: " + ", ".join(e.valid_names) + "\n")
        return EXIT_CONFIG
    status = run_scenario(config, args.threads)
    if status == EXIT_CONFIG and config.scenario not in mfglab.SCENARIO_NAMES:
        sys.stderr.write("valid names: " + ", ".join(mfglab.SCENARIO_NAMES) + "\n")
    return status


def _list() -> int:
    catalog = list_scenarios()
    width = max(len(name) for name, _ in catalog)
    for name, description in catalog:
        print(f"{name.ljust(width)}  {description}")
    return 0


def _show(args: argparse.Namespace) -> int:
    try:
        scenario = get_scenario(args.scenario)
    except mfglab.ConfigException as e:
        sys.stderr.write(f"mfg-lab: {e}\n")
        return EXIT_CONFIG
    print(json.dumps({"scenario": scenario.name, "seed": 0, "params": scenario.defaults}, indent=2))
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    if args.command == "run":
        return _run(args)
    if args.command == "list":
        return _list()
    return _show(args)


if __name__ == "__main__":
    sys.exit(main())
