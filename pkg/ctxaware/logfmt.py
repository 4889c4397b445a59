"""
Detection log grammar.

One line per presence transition, in the format the field trials logged:

    Saiu desconhecido - 34:C8:03:F6:F3:A8<TAB>Time: 25/07/2013 11:02:57.000<TAB>Coord: ...
    Entrou desconhecido - Jj 34:C8:03:F6:F3:A8<TAB>Time: 25/07/2013 11:03:04.000<TAB>Coord: ...

"Entrou"/"Saiu" are entered/exited, "desconhecido"/"conhecido" unknown/known device.
The optional token before the MAC is the advertised radio name. The renderer emits a
single tab between segments; the parser accepts any run of whitespace.
Timestamps are rendered in UTC from epoch milliseconds.
"""

import logging
import random
import re
from collections import Counter
from collections.abc import Iterable
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from decimal import Decimal
from enum import Enum

from ctxaware.model import CtxError, DeviceId, GeoPoint, InvalidCoordinate, parse_device_id
from ctxaware.presence import PresenceEvent, PresenceEventKind, PresenceSession

logger = logging.getLogger(__name__)

EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
MIN_COORD_DIGITS = 7

KNOWN_KEYWORD = "conhecido"
UNKNOWN_KEYWORD = "desconhecido"

_LINE_RE = re.compile(
    r"^(?P<dir>Entrou|Saiu)\s+(?P<kw>desconhecido|conhecido)\s+-\s+"
    r"(?:(?P<name>\S.*?)\s+)?(?P<mac>[0-9A-Fa-f]{2}(?::[0-9A-Fa-f]{2}){5})"
    r"\s+Time:\s+(?P<date>\d{2}/\d{2}/\d{4})\s+(?P<time>\d{2}:\d{2}:\d{2}\.\d{3})"
    r"\s+Coord:\s+(?P<lat>[-+]?\d+(?:\.\d+)?);(?P<lon>[-+]?\d+(?:\.\d+)?)\s*$"
)


class MalformedLine(CtxError):
    """Log line that does not follow the grammar."""

    def __init__(self, lineno: int, reason: str):
        self.lineno = lineno
        self.reason = reason
        super().__init__(f"line {lineno}: {reason}")


class Direction(Enum):
    ENTROU = "Entrou"
    SAIU = "Saiu"


@dataclass(frozen=True)
class LogLine:
    """
    One detection log record.

    Attributes:
        direction: Entrou (entered) or Saiu (exited).
        known: Device had a contact association.
        device: Remote device.
        at: Event time (epoch ms, rendered as UTC).
        coord: Observer coordinate.
        name: Advertised radio name, if any.
    """

    direction: Direction
    known: bool
    device: DeviceId
    at: int
    coord: GeoPoint
    name: str | None = None

    def __post_init__(self) -> None:
        if self.at < 0:
            raise ValueError(f"Log timestamps start at the epoch, got {self.at}")
        if self.name is not None:
            if not self.name or self.name != self.name.strip():
                raise ValueError(f"Device name {self.name!r} is empty or padded")
            if "\t" in self.name or self.name.splitlines() != [self.name]:
                raise ValueError(f"Device name {self.name!r} contains a tab or line break")

    @classmethod
    def from_event(cls, event: PresenceEvent) -> "LogLine":
        direction = Direction.ENTROU if event.kind is PresenceEventKind.ENTERED else Direction.SAIU
        name = event.name if direction is Direction.ENTROU else None
        if name is not None:
            name = " ".join(name.split()) or None
        return cls(direction, event.known, event.device, event.at, event.coord, name)


def format_coord(value: float) -> str:
    """
    Render a coordinate in plain decimal notation.

    Uses the shortest round-tripping representation, padded with trailing zeros to at
    least seven significant digits.
    """
    text = format(Decimal(repr(float(value))), "f")
    digits = text.lstrip("-").replace(".", "").lstrip("0")
    significant = len(digits) if digits else 1
    if significant < MIN_COORD_DIGITS:
        if "." not in text:
            text += "."
        text += "0" * (MIN_COORD_DIGITS - significant)
    return text


def format_timestamp(at: int) -> str:
    """Epoch ms -> `DD/MM/YYYY HH:MM:SS.mmm` (UTC)."""
    dt = EPOCH + timedelta(milliseconds=at)
    return f"{dt:%d/%m/%Y %H:%M:%S}.{dt.microsecond // 1000:03d}"


def parse_timestamp(date: str, clock: str) -> int:
    """`DD/MM/YYYY`, `HH:MM:SS.mmm` (UTC) -> epoch ms."""
    dt = datetime.strptime(f"{date} {clock}", "%d/%m/%Y %H:%M:%S.%f").replace(
        tzinfo=timezone.utc
    )
    return (dt - EPOCH) // timedelta(milliseconds=1)


def render(line: LogLine) -> str:
    """Render one log line (no trailing newline)."""
    keyword = KNOWN_KEYWORD if line.known else UNKNOWN_KEYWORD
    name = f"{line.name} " if line.name else ""
    return (
        f"{line.direction.value} {keyword} - {name}{line.device}"
        f"\tTime: {format_timestamp(line.at)}"
        f"\tCoord: {format_coord(line.coord.lat)};{format_coord(line.coord.lon)}"
    )


def render_lines(lines: Iterable[LogLine]) -> str:
    """Render a document: one line each, LF-terminated."""
    return "".join(render(line) + "\n" for line in lines)


def parse_line(text: str, lineno: int = 1) -> LogLine:
    """
    Parse one line.

    Raises:
        MalformedLine: On any grammar, timestamp or coordinate error.
    """
    m = _LINE_RE.match(text.strip())
    if m is None:
        raise MalformedLine(lineno, "does not match detection log grammar")
    try:
        at = parse_timestamp(m["date"], m["time"])
    except ValueError as e:
        raise MalformedLine(lineno, f"bad timestamp: {e}") from e
    try:
        coord = GeoPoint(float(m["lat"]), float(m["lon"]))
    except InvalidCoordinate as e:
        raise MalformedLine(lineno, f"bad coordinate: {e}") from e
    if at < 0:
        raise MalformedLine(lineno, "timestamp before 01/01/1970")
    try:
        return LogLine(
            direction=Direction(m["dir"]),
            known=m["kw"] == KNOWN_KEYWORD,
            device=parse_device_id(m["mac"]),
            at=at,
            coord=coord,
            name=m["name"],
        )
    except ValueError as e:
        raise MalformedLine(lineno, str(e)) from e


def parse(text: str) -> list[LogLine]:
    """
    Parse a log document. Blank lines are skipped.

    Raises:
        MalformedLine: At the first malformed line (1-based line number).
    """
    return [
        parse_line(raw, lineno)
        for lineno, raw in enumerate(text.splitlines(), start=1)
        if raw.strip()
    ]


@dataclass
class ParseReport:
    """Lenient parse outcome: good lines plus every malformed line."""

    lines: list[LogLine] = field(default_factory=list)
    errors: list[MalformedLine] = field(default_factory=list)


def parse_report(text: str) -> ParseReport:
    """Parse every well-formed line and collect the malformed ones."""
    report = ParseReport()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            report.lines.append(parse_line(raw, lineno))
        except MalformedLine as e:
            logger.warning(str(e))
            report.errors.append(e)
    return report


def sort_lines(lines: Iterable[LogLine]) -> list[LogLine]:
    """Stable time order (ties keep file order)."""
    return sorted(lines, key=lambda line: line.at)


@dataclass(frozen=True)
class FlapCandidate:
    """Exit followed by re-entry of the same device faster than the scan cadence."""

    device: DeviceId
    exited_at: int
    reentered_at: int

    @property
    def gap_ms(self) -> int:
        return self.reentered_at - self.exited_at


@dataclass
class SessionStats:
    distinct_devices: int = 0
    known_devices: int = 0
    session_count: int = 0
    detections_per_hour: dict[int, int] = field(default_factory=dict)
    max_simultaneous: int = 0
    max_simultaneous_at: int | None = None
    flap_candidates: int = 0


@dataclass
class SessionReport:
    sessions: list[PresenceSession] = field(default_factory=list)
    flaps: list[FlapCandidate] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    stats: SessionStats = field(default_factory=SessionStats)


def reconstruct_sessions(lines: Iterable[LogLine], scan_period_ms: int = 30_000) -> SessionReport:
    """
    Fold Entrou/Saiu pairs into presence sessions and compute co-presence statistics.

    Args:
        lines: Log lines in time order (use sort_lines first if unsure).
        scan_period_ms: Scan cadence; a re-entry faster than this is a flap candidate.

    Returns:
        Sessions (open ones have exited_at None), flap candidates, warnings, statistics.
        An exit with no prior entry yields a session starting at the first log line.
    """
    ordered = list(lines)
    report = SessionReport()
    if not ordered:
        return report

    log_start = ordered[0].at
    open_sessions: dict[DeviceId, PresenceSession] = {}
    last_exit: dict[DeviceId, int] = {}
    per_hour: Counter[int] = Counter()
    known: set[DeviceId] = set()

    for line in ordered:
        if line.known:
            known.add(line.device)
        if line.direction is Direction.ENTROU:
            per_hour[(EPOCH + timedelta(milliseconds=line.at)).hour] += 1
            if line.device in open_sessions:
                report.warnings.append(f"{line.device}: repeated entry at {line.at}")
                continue
            exited = last_exit.get(line.device)
            if exited is not None and line.at - exited < scan_period_ms:
                report.flaps.append(FlapCandidate(line.device, exited, line.at))
            open_sessions[line.device] = PresenceSession(
                line.device, line.at, known=line.known, name=line.name
            )
            continue

        last_exit[line.device] = line.at
        session = open_sessions.pop(line.device, None)
        if session is None:
            message = f"{line.device}: exit at {line.at} without entry"
            logger.warning(message)
            report.warnings.append(message)
            report.sessions.append(
                PresenceSession(line.device, min(log_start, line.at), line.at, known=line.known)
            )
            continue
        report.sessions.append(PresenceSession(
            session.device, session.entered_at, line.at, known=session.known, name=session.name
        ))

    report.sessions.extend(open_sessions.values())
    report.sessions.sort(key=lambda s: (s.entered_at, s.device))

    max_count, max_at = _max_simultaneous(report.sessions)
    report.stats = SessionStats(
        distinct_devices=len({line.device for line in ordered}),
        known_devices=len(known),
        session_count=len(report.sessions),
        detections_per_hour=dict(sorted(per_hour.items())),
        max_simultaneous=max_count,
        max_simultaneous_at=max_at,
        flap_candidates=len(report.flaps),
    )
    return report


def _max_simultaneous(sessions: list[PresenceSession]) -> tuple[int, int | None]:
    # exits sort before entries at the same instant
    deltas: list[tuple[int, int]] = []
    for s in sessions:
        if s.exited_at is not None and s.exited_at == s.entered_at:
            continue
        deltas.append((s.entered_at, 1))
        if s.exited_at is not None:
            deltas.append((s.exited_at, -1))
    deltas.sort()
    count = best = 0
    best_at: int | None = None
    for at, delta in deltas:
        count += delta
        if count > best:
            best, best_at = count, at
    return best, best_at


def generate_lines(
    device_count: int,
    rng: random.Random,
    start: int = 1_374_742_800_000,
    span_ms: int = 8 * 3_600_000,
    coord: GeoPoint = GeoPoint(38.738522, -9.1543572),
) -> list[LogLine]:
    """
    Synthetic detection log with exactly `device_count` distinct devices.

    Each device gets one closed session inside [start, start + span_ms).
    """
    lines: list[LogLine] = []
    for i in range(device_count):
        octets = (0x02, 0, 0, (i >> 16) & 0xFF, (i >> 8) & 0xFF, i & 0xFF)
        device = DeviceId(":".join(f"{b:02X}" for b in octets))
        entered = start + rng.randrange(span_ms // 2)
        exited = entered + rng.randrange(60_000, span_ms // 2)
        known = rng.random() < 0.3
        lines.append(LogLine(Direction.ENTROU, known, device, entered, coord))
        lines.append(LogLine(Direction.SAIU, known, device, exited, coord))
    return sort_lines(lines)
