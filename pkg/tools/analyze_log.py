#!/usr/bin/env python3
"""
Detection log analysis tool.

Parses a detection log, reconstructs presence sessions and prints co-presence
statistics: distinct devices, sessions, flap candidates, entries per hour and the
maximum number of devices near at once.
"""

import argparse
import json
import random
import sys
from dataclasses import asdict
from pathlib import Path

from rich.console import Console
from rich.table import Table

from ctxaware import logfmt
from ctxaware.config import load_config, setup_logging

console = Console()
err_console = Console(stderr=True)


def print_stats(report: logfmt.SessionReport) -> None:
    stats = report.stats
    console.print(f"Distinct devices: {stats.distinct_devices}")
    console.print(f"Known devices: {stats.known_devices}")
    console.print(f"Sessions: {stats.session_count}")
    console.print(f"Flap candidates: {stats.flap_candidates}")
    at = logfmt.format_timestamp(stats.max_simultaneous_at) if stats.max_simultaneous_at else "-"
    console.print(f"Max simultaneous: {stats.max_simultaneous} (at {at})")

    if stats.detections_per_hour:
        table = Table(title="Entries per hour (UTC)")
        table.add_column("Hour", justify="right")
        table.add_column("Entries", justify="right")
        for hour, count in stats.detections_per_hour.items():
            table.add_row(f"{hour:02d}", str(count))
        console.print(table)

    for flap in report.flaps:
        console.print(
            f"Flap: {flap.device} out {logfmt.format_timestamp(flap.exited_at)} "
            f"back after {flap.gap_ms / 1000:.1f} s"
        )
    for warning in report.warnings:
        err_console.print(f"Warning: {warning}")


def main(argv: list[str] | None = None) -> int:
    """Main entry point for ctx-analyze tool."""
    parser = argparse.ArgumentParser(description="Analyze a detection log")
    parser.add_argument("log", nargs="?", type=Path, help="Detection log file")
    parser.add_argument(
        "--demo", type=int, metavar="N", help="Analyze a generated log of N devices instead"
    )
    parser.add_argument("--seed", type=int, default=1, help="Seed for --demo")
    parser.add_argument("--lenient", action="store_true", help="Skip malformed lines")
    parser.add_argument("--json", action="store_true", help="Print statistics as JSON")
    parser.add_argument("--config", type=Path, default=None, help="Configuration file")

    args = parser.parse_args(argv)

    config = load_config(args.config)
    setup_logging(config.logging)

    if args.demo is not None:
        lines = logfmt.generate_lines(args.demo, random.Random(args.seed))
    elif args.log is None:
        err_console.print("Error: give a log file or --demo N")
        return 2
    elif not args.log.exists():
        err_console.print(f"Error: log file '{args.log}' not found")
        return 2
    else:
        text = args.log.read_text(encoding="utf-8")
        if args.lenient:
            parsed = logfmt.parse_report(text)
            lines = parsed.lines
            for error in parsed.errors:
                err_console.print(f"Skipped {error}")
        else:
            try:
                lines = logfmt.parse(text)
            except logfmt.MalformedLine as e:
                err_console.print(f"Error: {args.log}: {e}")
                return 1

    report = logfmt.reconstruct_sessions(
        logfmt.sort_lines(lines), config.presence.scan_period_ms
    )
    if args.json:
        print(json.dumps(asdict(report.stats), sort_keys=True))
    else:
        print_stats(report)
    return 0


if __name__ == "__main__":
    sys.exit(main())
