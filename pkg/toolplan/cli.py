"""Command-line front door: `run`, `tools`, `replay` and `report`.

Exit codes: 0 on success (whether or not a trial solved its task), 2 for configuration and usage errors,
3 for unreadable data, logs or reports.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from toolplan import __version__
from toolplan.catalog import build_registry
from toolplan.config import DecodeError, RunConfig, load_config
from toolplan.harness import (
    BenchmarkReport,
    HarnessError,
    PolicyKind,
    ReportError,
    load_competition,
    make_backend,
    read_report,
    run_trials,
)
from toolplan.registry import CatalogError, EmptySubtaskToolset
from toolplan.rewards import StageId
from toolplan.scratchpad import render_dump
from toolplan.search import Algorithm
from toolplan.table import CsvParseError, ToolkitIoError
from toolplan.trajectory import LogError, read_log, render_log

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


class UsageError(Exception):
    """Flags that parse but do not make sense together."""


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="toolplan", description="Plan tabular ML workflows over a curated toolset.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG logging")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run benchmark trials for one competition and algorithm")
    run.add_argument("--competition", required=True, help="bundled competition name or path to a competition .toml")
    run.add_argument("--algorithm", required=True, choices=[a.value for a in Algorithm])
    run.add_argument("--policy", default=PolicyKind.SCRIPTED.value, choices=[p.value for p in PolicyKind])
    run.add_argument("--trials", type=int, help="number of trials (default from the configuration)")
    run.add_argument("--seed", type=int, help="seed of the first trial; trial i uses seed + i (default search.seed)")
    run.add_argument("--no-masking", action="store_true", help="expose every tool in each subtask (hierarchical)")
    run.add_argument("--config", type=Path, help="TOML file merged over the packaged defaults")
    run.add_argument("--output-dir", type=Path, help="where work files, submissions, logs and reports go")
    run.add_argument("--data-dir", type=Path, help="where competition source files live")
    run.add_argument("--workers", type=int, help="concurrent trials")

    tools = commands.add_parser("tools", help="list the tool catalog")
    tools.add_argument("--stage", help="only the tools exposed in this stage")

    replay = commands.add_parser("replay", help="render a trajectory log")
    replay.add_argument("logfile", type=Path)
    replay.add_argument("--scratchpad", action="store_true", help="also print the best path's scratchpad dump")

    report = commands.add_parser("report", help="render report JSON files as a table")
    report.add_argument("reports", type=Path, nargs="+")
    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _run_config(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config)
    if args.no_masking:
        if args.algorithm != Algorithm.HIERARCHICAL.value:
            raise UsageError("--no-masking only applies to --algorithm hierarchical")
        config = dataclasses.replace(config, search=dataclasses.replace(config.search, masking=False))
    overrides = {
        name: value
        for name, value in (
            ("output_dir", args.output_dir),
            ("data_dir", args.data_dir),
            ("workers", args.workers),
            ("trials", args.trials),
        )
        if value is not None
    }
    if overrides:
        config = dataclasses.replace(config, harness=dataclasses.replace(config.harness, **overrides))
    return config


def _cmd_run(args: argparse.Namespace) -> int:
    config = _run_config(args)
    spec = load_competition(args.competition, config.harness.data_dir)
    algorithm = Algorithm(args.algorithm)
    backend = make_backend(PolicyKind(args.policy), config)
    seed = config.search.seed if args.seed is None else args.seed
    row, results = run_trials(spec, algorithm, config, backend, seed=seed)
    for result in results:
        state = f"score {result.score:.6g}, percentile {result.percentile:.2f}" if result.valid else result.detail
        print(f"trial {result.trial} (seed {result.seed}): {result.outcome}; {state}")
    print(BenchmarkReport([row]).render())
    return EXIT_OK


def _cmd_tools(args: argparse.Namespace) -> int:
    registry = build_registry()
    if args.stage is None:
        view = registry.full()
    else:
        try:
            stage = StageId.parse(args.stage)
        except ValueError as error:
            raise UsageError(str(error)) from error
        view = registry.mask(stage)
    for desc in view.exposed():
        stages = ",".join(stage.value for stage in sorted(desc.stages, key=lambda s: s.index))
        print(f"{desc.name:<40} {desc.wrapper.value:<9} {stages:<50} {desc.summary}")
    return EXIT_OK


def _cmd_replay(args: argparse.Namespace) -> int:
    records = read_log(args.logfile)
    print(render_log(records))
    if args.scratchpad:
        dump = args.logfile.with_suffix(".scratchpad.json")
        try:
            print(render_dump(json.loads(dump.read_text(encoding="utf-8"))))
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as error:
            raise LogError(str(dump), f"cannot render the scratchpad dump ({error})") from error
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    rows = [row for path in args.reports for row in read_report(path).competitions]
    print(BenchmarkReport(rows).render())
    return EXIT_OK


_COMMANDS = {"run": _cmd_run, "tools": _cmd_tools, "replay": _cmd_replay, "report": _cmd_report}


def main(argv: Sequence[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return EXIT_OK if not exit_.code else EXIT_CONFIG
    _configure_logging(args.verbose)
    try:
        return _COMMANDS[args.command](args)
    except (LogError, ReportError, CsvParseError, ToolkitIoError) as error:
        print(f"error: {error}", file=sys.stderr)
        return EXIT_DATA
    except (UsageError, DecodeError, HarnessError, CatalogError, EmptySubtaskToolset) as error:
        print(f"error: {error}", file=sys.stderr)
        return EXIT_CONFIG
