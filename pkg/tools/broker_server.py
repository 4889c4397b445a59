#!/usr/bin/env python3
"""
Standalone broker service.

Serves the framed broker protocol over TCP, one thread per device connection,
and keeps an optional JSON snapshot up to date after every request.
"""

import argparse
import sys
from pathlib import Path

from rich.console import Console

from ctxaware.broker import Broker, BrokerServer
from ctxaware.config import load_config, setup_logging
from ctxaware.link import parse_address

err_console = Console(stderr=True)


def main(argv: list[str] | None = None) -> int:
    """Main entry point for ctx-broker tool."""
    parser = argparse.ArgumentParser(description="Run the ctxaware broker")
    parser.add_argument("--listen", default=None, help="host:port to listen on")
    parser.add_argument("--snapshot", type=Path, default=None, help="Broker snapshot file")
    parser.add_argument("--config", type=Path, default=None, help="Configuration file")

    args = parser.parse_args(argv)

    config = load_config(args.config)
    setup_logging(config.logging)

    try:
        host, port = parse_address(args.listen or config.broker.listen)
    except ValueError as e:
        err_console.print(f"Error: {e}")
        return 2

    snapshot = args.snapshot or (Path(config.broker.snapshot) if config.broker.snapshot else None)
    broker = Broker.load_snapshot(snapshot) if snapshot else Broker()

    try:
        server = BrokerServer((host, port), broker, snapshot)
    except OSError as e:
        err_console.print(f"Error: cannot listen on {host}:{port}: {e}")
        return 1

    err_console.print(f"Broker listening on {host}:{port}")
    with server:
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            err_console.print("\nStopped by user")
    if snapshot:
        broker.save_snapshot(snapshot)
    return 0


if __name__ == "__main__":
    sys.exit(main())
