#!/usr/bin/env python3
"""
Single-device command-line client.

Each subcommand maps to one device operation on the store in the data directory
($CTXAWARE_DATA_DIR or the configured store.data_dir). Output is one record per
line, tab-separated, for scripting. Exit status: 0 success, 1 operation error,
2 usage error or uninitialised store.
"""

import argparse
import sys
from datetime import datetime
from pathlib import Path

from rich.console import Console

from ctxaware.config import Config, load_config, resolve_data_dir, setup_logging
from ctxaware.device import DeviceApp
from ctxaware.link import BrokerSession, SocketLink
from ctxaware.logfmt import format_timestamp
from ctxaware.model import CtxError, GeoPoint, NoteId, SystemClock, TimeWindow, parse_device_id
from ctxaware.presence import ScanResult
from ctxaware.scenarios.runner import OPEN_WINDOW_END_MS, to_epoch_ms
from ctxaware.store import ClientStore, parse_owner
from ctxaware.triggers import LocationTrigger, PersonTrigger, TimeTrigger, Trigger
from ctxaware.wire import LinkDown

err_console = Console(stderr=True)


class UsageError(Exception):
    pass


def parse_time(text: str) -> int:
    """Epoch milliseconds, or ISO-8601 (naive means UTC)."""
    if text.isdigit():
        return int(text)
    try:
        return to_epoch_ms(datetime.fromisoformat(text))
    except ValueError as e:
        raise UsageError(f"Bad time {text!r}") from e


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise UsageError(f"Expected on or off, got {text!r}")
    return text == "on"


def _trigger(args: argparse.Namespace) -> Trigger:
    if args.person is not None:
        return PersonTrigger(args.person)
    if args.location is not None:
        return LocationTrigger(args.location)
    if args.window is not None:
        return TimeTrigger(_window(args.window))
    raise UsageError("Give --person, --location or --window")


def _window(spec: list[str]) -> TimeWindow:
    start, end = spec
    return TimeWindow(parse_time(start), OPEN_WINDOW_END_MS if end == "-" else parse_time(end))


def _connect(app: DeviceApp, config: Config, address: str | None) -> None:
    link = SocketLink.from_address(address or config.broker.listen, config.broker.timeout_ms)
    app.connect(BrokerSession(link, retries=config.broker.retries))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Context-aware device client")
    parser.add_argument("--data-dir", default=None, help="Device data directory")
    parser.add_argument("--config", type=Path, default=None, help="Configuration file")
    parser.add_argument("--broker", default=None, help="Broker host:port")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="Create the store for a device")
    p.add_argument("device", help="This device's MAC address")

    p = sub.add_parser("add-contact", help="Associate a contact with a device")
    p.add_argument("contact_id", type=int)
    p.add_argument("name")
    p.add_argument("device")

    p = sub.add_parser("create-note", help="Create a note; prints its id")
    body = p.add_mutually_exclusive_group(required=True)
    body.add_argument("--text")
    body.add_argument("--audio", type=Path, help="Audio file")
    p.add_argument("--audio-ms", type=int, default=0, help="Audio duration")
    p.add_argument("--person", type=int, action="append", default=[])
    p.add_argument("--location", type=int, action="append", default=[])
    p.add_argument("--window", nargs=2, metavar=("START", "END"), help="END may be -")
    p.add_argument("--to", type=int, action="append", default=[], help="Recipient contact")
    p.add_argument("--carrier", type=int, default=None)
    p.add_argument("--public", action="store_true")

    for name in ("attach", "detach"):
        p = sub.add_parser(name, help=f"{name.capitalize()} a trigger")
        p.add_argument("note")
        p.add_argument("--person", type=int)
        p.add_argument("--location", type=int)
        p.add_argument("--window", nargs=2, metavar=("START", "END"))

    p = sub.add_parser("send", help="Address a note and sync if the broker is reachable")
    p.add_argument("note")
    p.add_argument("--to", type=int, action="append", required=True)
    p.add_argument("--carrier", type=int, default=None)

    sub.add_parser("near", help="People near, one per line")

    p = sub.add_parser("scan", help="Feed one radio scan")
    p.add_argument("--see", action="append", default=[], metavar="MAC[=NAME]")
    p.add_argument("--at", default=None, help="Scan time (default now)")
    p.add_argument("--lat", type=float)
    p.add_argument("--lon", type=float)

    p = sub.add_parser("notifications", help="Notification history")
    p.add_argument("--pending", action="store_true")

    p = sub.add_parser("ack", help="Acknowledge notifications")
    p.add_argument("notification_id", type=int, nargs="?")
    p.add_argument("--all", action="store_true")

    p = sub.add_parser("ignore", help="Ignore a contact until a time")
    p.add_argument("contact_id", type=int)
    p.add_argument("--until", help="Expiry time")
    p.add_argument("--clear", action="store_true", help="Stop ignoring")

    p = sub.add_parser("block", help="Stop a contact from detecting me")
    p.add_argument("contact_id", type=int)
    p = sub.add_parser("unblock")
    p.add_argument("contact_id", type=int)

    p = sub.add_parser("silence", help="Silent mode on/off")
    p.add_argument("state")
    p = sub.add_parser("invisible", help="Invisible mode on/off")
    p.add_argument("state")

    p = sub.add_parser("save-location", help="Save the current position as a place")
    p.add_argument("label")
    p.add_argument("--lat", type=float)
    p.add_argument("--lon", type=float)

    p = sub.add_parser("tag-location", help="Tag an indoor place with a beacon")
    p.add_argument("label")
    p.add_argument("beacon")

    sub.add_parser("sync", help="Upload dirty rows and fetch pushes")
    sub.add_parser("export", help="Detection and action history")
    return parser


def run(args: argparse.Namespace, config: Config, store: ClientStore) -> int:
    if args.command == "init":
        app = DeviceApp(parse_device_id(args.device), store, config)
        print(app.device)
        return 0

    owner = parse_owner(store)
    if owner is None:
        raise UsageError("Store not initialised; run 'init <MAC>' first")
    app = DeviceApp(owner, store, config, SystemClock())
    cmd = args.command

    if cmd == "add-contact":
        assoc = app.add_contact(args.contact_id, args.name, parse_device_id(args.device))
        print(f"{assoc.contact_id}\t{assoc.device}\t{assoc.display_name}")
    elif cmd == "create-note":
        note = app.create_note(
            text=args.text,
            audio=args.audio.read_bytes() if args.audio else None,
            audio_ms=args.audio_ms,
            person=args.person,
            locations=args.location,
            window=_window(args.window) if args.window else None,
            recipients=args.to,
            carrier=args.carrier,
            public=args.public,
        )
        print(note.note_id)
    elif cmd == "attach":
        print(app.attach(NoteId.parse(args.note), _trigger(args)).note_id)
    elif cmd == "detach":
        print(app.detach(NoteId.parse(args.note), _trigger(args)).note_id)
    elif cmd == "send":
        note = app.send_note(NoteId.parse(args.note), args.to, args.carrier)
        _connect(app, config, args.broker)
        try:
            result = app.synchronize()
            print(f"{note.note_id}\tsent\t{result.rows_acked}")
        except LinkDown:
            print(f"{note.note_id}\tqueued\t{store.dirty_count()}")
    elif cmd == "near":
        for p in app.people_near():
            status = "known" if p.known else "unknown"
            contact = "" if p.contact_id is None else str(p.contact_id)
            print(f"{p.device}\t{status}\t{contact}\t{format_timestamp(p.since)}\t{p.name or ''}")
    elif cmd == "scan":
        at = parse_time(args.at) if args.at else app.clock.now()
        seen = []
        for item in args.see:
            mac, _, name = item.partition("=")
            seen.append((parse_device_id(mac), name or None))
        position = None
        if args.lat is not None and args.lon is not None:
            position = GeoPoint(args.lat, args.lon)
        for n in app.on_scan(ScanResult.of(at, seen), position):
            print(f"{n.notification_id}\t{n.kind.value}\t{n.subject}\t{format_timestamp(n.at)}")
    elif cmd == "notifications":
        for n in app.notifications(args.pending):
            flag = "acked" if n.acknowledged else "pending"
            print(
                f"{n.notification_id}\t{n.kind.value}\t{n.subject}"
                f"\t{format_timestamp(n.at)}\t{flag}"
            )
    elif cmd == "ack":
        if args.all:
            print(app.acknowledge_all())
        elif args.notification_id is not None:
            app.acknowledge(args.notification_id)
        else:
            raise UsageError("Give a notification id or --all")
    elif cmd == "ignore":
        if args.clear:
            app.unignore(args.contact_id)
        elif args.until:
            app.ignore(args.contact_id, parse_time(args.until))
        else:
            raise UsageError("Give --until or --clear")
    elif cmd == "block":
        app.block(args.contact_id)
    elif cmd == "unblock":
        app.unblock(args.contact_id)
    elif cmd == "silence":
        app.set_silent(_on_off(args.state))
    elif cmd == "invisible":
        app.set_invisible(_on_off(args.state))
    elif cmd == "save-location":
        if args.lat is not None and args.lon is not None:
            app.move_to(GeoPoint(args.lat, args.lon))
        loc = app.save_location(args.label)
        print(f"{loc.location_id}\t{loc.label}")
    elif cmd == "tag-location":
        loc = app.tag_indoor_location(args.label, parse_device_id(args.beacon))
        print(f"{loc.location_id}\t{loc.label}")
    elif cmd == "sync":
        _connect(app, config, args.broker)
        result = app.synchronize()
        print(
            f"sent\t{result.rows_sent}\tacked\t{result.rows_acked}"
            f"\treceived\t{len(result.applied)}"
        )
    elif cmd == "export":
        sys.stdout.write(app.export_history())
    return 0


def main(argv: list[str] | None = None) -> int:
    """Main entry point for ctx-device tool."""
    args = build_parser().parse_args(argv)
    config = load_config(args.config)
    setup_logging(config.logging)

    data_dir = resolve_data_dir(config, args.data_dir)
    if args.command != "init" and not data_dir.exists():
        err_console.print(f"Error: data directory '{data_dir}' not found")
        return 2

    try:
        with ClientStore.open(data_dir) as store:
            return run(args, config, store)
    except UsageError as e:
        err_console.print(f"Error: {e}")
        return 2
    except (CtxError, ValueError) as e:
        err_console.print(f"Error: {type(e).__name__}: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
