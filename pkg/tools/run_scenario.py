#!/usr/bin/env python3
"""
Scenario runner tool.

Runs scenario scripts on the simulated world, prints a step report and writes the
trace directory. Exit status: 0 all expectations passed, 1 a step failed, 2 usage
error, missing file or malformed script.
"""

import argparse
import sys
from pathlib import Path

from rich.console import Console
from rich.table import Table

from ctxaware.config import load_config, setup_logging
from ctxaware.scenarios.runner import (
    EXAMPLES_DIR,
    ScenarioReport,
    ScenarioResult,
    ScriptError,
    list_scenarios,
    load_script,
    run_scenario,
)

console = Console()
err_console = Console(stderr=True)


def _resolve(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    example = EXAMPLES_DIR / f"{name}.json"
    return example if example.exists() else path


def print_report(report: ScenarioReport) -> None:
    """Print formatted scenario report."""
    table = Table(title=f"{report.name} (seed {report.seed})", show_lines=False)
    table.add_column("Step")
    table.add_column("Result")
    table.add_column("Message")
    for step in report.steps:
        status = "[green]PASS[/green]" if step.passed else "[red]FAIL[/red]"
        table.add_row(step.name, status, step.message)
    console.print(table)
    console.print(
        f"Result: {report.result.value.upper()} "
        f"({report.passed_count}/{len(report.steps)} steps passed)"
    )


def main(argv: list[str] | None = None) -> int:
    """Main entry point for ctx-run tool."""
    parser = argparse.ArgumentParser(description="Run context-aware scenarios")
    parser.add_argument("scenario", nargs="*", help="Scenario file or example name")
    parser.add_argument("--all", action="store_true", help="Run every shipped example")
    parser.add_argument("--list", action="store_true", help="List shipped examples")
    parser.add_argument("--seed", type=int, default=None, help="World seed")
    parser.add_argument("--config", type=Path, default=None, help="Configuration file")
    parser.add_argument("--trace", type=Path, default=Path("trace"), help="Trace output directory")

    args = parser.parse_args(argv)

    if args.list:
        for path in list_scenarios():
            console.print(path.stem)
        return 0

    paths = list_scenarios() if args.all else [_resolve(s) for s in args.scenario]
    if not paths:
        err_console.print("Error: no scenario given")
        return 2

    config = load_config(args.config)
    setup_logging(config.logging)

    failed = 0
    for path in paths:
        if not path.exists():
            err_console.print(f"Error: scenario file '{path}' not found")
            return 2
        try:
            script = load_script(path)
            report = run_scenario(script, config, args.seed, args.trace / script.name)
        except ScriptError as e:
            err_console.print(f"Error: {e}")
            return 2

        print_report(report)
        if report.result is not ScenarioResult.PASSED:
            failed += 1
            for step in report.failures:
                err_console.print(f"{report.name}: {step.name} failed: {step.message}")

    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
