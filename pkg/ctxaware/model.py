"""
Shared domain types and identity rules.

Device identity is the radio MAC address in canonical form. Notes are identified by
(creator device, local sequence number) so they can be created offline without coordination.
All value types are frozen; updates go through dataclasses.replace().
"""

import base64
import math
import re
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Protocol

_MAC_RE = re.compile(r"[0-9A-Fa-f]{2}(?::[0-9A-Fa-f]{2}){5}")


class CtxError(Exception):
    """Base exception for ctxaware domain errors."""

    pass


class MalformedId(CtxError, ValueError):
    """Text is not a MAC-form device identifier."""

    def __init__(self, text: str, reason: str):
        self.text = text
        self.reason = reason
        super().__init__(f"Malformed device id {text!r}: {reason}")


class InvalidCoordinate(CtxError, ValueError):
    """Latitude/longitude out of range or not finite."""

    pass


class UnknownContact(CtxError, LookupError):
    """Contact id is not present in the association table."""

    def __init__(self, contact_id: int):
        self.contact_id = contact_id
        super().__init__(f"Unknown contact {contact_id}")


class UnknownLocation(CtxError, LookupError):
    """Location id is not present in the locations table."""

    def __init__(self, location_id: int):
        self.location_id = location_id
        super().__init__(f"Unknown location {location_id}")


class MissingCarrierTrigger(CtxError):
    """Carrier note whose carrier is not one of its person triggers."""

    pass


class InvalidNote(CtxError, ValueError):
    """Note violates a structural invariant."""

    pass


@dataclass(frozen=True, order=True)
class DeviceId:
    """Radio identifier in canonical `XX:XX:XX:XX:XX:XX` uppercase form."""

    value: str

    def __post_init__(self) -> None:
        if not _MAC_RE.fullmatch(self.value) or self.value != self.value.upper():
            raise MalformedId(self.value, "not canonical uppercase MAC form")

    @classmethod
    def parse(cls, text: str) -> "DeviceId":
        """Parse and canonicalize a MAC string."""
        return parse_device_id(text)

    def __str__(self) -> str:
        return self.value


def parse_device_id(text: str) -> DeviceId:
    """
    Parse a MAC-form device id, canonicalizing to uppercase.

    Args:
        text: Colon-separated MAC string (any case, surrounding whitespace ignored).

    Returns:
        Canonical DeviceId.

    Raises:
        MalformedId: On wrong group count or non-hex digits.
    """
    stripped = text.strip()
    groups = stripped.split(":")
    if len(groups) != 6:
        raise MalformedId(text, f"expected 6 groups, got {len(groups)}")
    for group in groups:
        if len(group) != 2:
            raise MalformedId(text, f"group {group!r} is not two digits")
        if not all(c in "0123456789abcdefABCDEF" for c in group):
            raise MalformedId(text, f"group {group!r} has non-hex digits")
    return DeviceId(stripped.upper())


@dataclass(frozen=True)
class ContactAssociation:
    """Phone-book contact bound to a radio device (the ListaMACs row)."""

    contact_id: int
    display_name: str
    device: DeviceId

    def to_dict(self) -> dict[str, Any]:
        return {
            "contact_id": self.contact_id,
            "display_name": self.display_name,
            "device": self.device.value,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ContactAssociation":
        return cls(
            contact_id=int(data["contact_id"]),
            display_name=str(data.get("display_name", "")),
            device=parse_device_id(data["device"]),
        )


@dataclass(frozen=True)
class GeoPoint:
    """WGS84 coordinate in decimal degrees."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise InvalidCoordinate(f"Non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise InvalidCoordinate(f"Latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise InvalidCoordinate(f"Longitude {self.lon} outside [-180, 180]")

    def offset(self, north_m: float, east_m: float) -> "GeoPoint":
        """Return a point displaced by small metric offsets (equirectangular, clamped)."""
        dlat = north_m / 111_194.93
        coslat = max(math.cos(math.radians(self.lat)), 1e-9)
        dlon = east_m / (111_194.93 * coslat)
        lat = min(90.0, max(-90.0, self.lat + dlat))
        lon = ((self.lon + dlon + 180.0) % 360.0) - 180.0
        return GeoPoint(lat, lon)

    def to_list(self) -> list[float]:
        return [self.lat, self.lon]

    @classmethod
    def from_list(cls, data: list[float] | tuple[float, float]) -> "GeoPoint":
        return cls(float(data[0]), float(data[1]))


class LocationKind(Enum):
    """Indoor locations are tagged by a beacon, outdoor ones by coordinates."""

    INDOOR = "indoor"
    OUTDOOR = "outdoor"


@dataclass(frozen=True)
class LocationDef:
    """Saved place usable as a note trigger."""

    location_id: int
    kind: LocationKind
    label: str
    beacon: DeviceId | None = None
    point: GeoPoint | None = None

    def __post_init__(self) -> None:
        if self.kind is LocationKind.INDOOR and (self.beacon is None or self.point is not None):
            raise InvalidNote(f"Indoor location {self.location_id} needs a beacon and no point")
        if self.kind is LocationKind.OUTDOOR and (self.point is None or self.beacon is not None):
            raise InvalidNote(f"Outdoor location {self.location_id} needs a point and no beacon")

    def to_dict(self) -> dict[str, Any]:
        return {
            "location_id": self.location_id,
            "kind": self.kind.value,
            "label": self.label,
            "beacon": self.beacon.value if self.beacon else None,
            "point": self.point.to_list() if self.point else None,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "LocationDef":
        return cls(
            location_id=int(data["location_id"]),
            kind=LocationKind(data["kind"]),
            label=str(data.get("label", "")),
            beacon=parse_device_id(data["beacon"]) if data.get("beacon") else None,
            point=GeoPoint.from_list(data["point"]) if data.get("point") else None,
        )


@dataclass(frozen=True, order=True)
class NoteId:
    """Globally unique note identity: creator device plus its local counter."""

    creator: DeviceId
    seq: int

    def __str__(self) -> str:
        return f"{self.creator.value}/{self.seq}"

    @classmethod
    def parse(cls, text: str) -> "NoteId":
        creator, sep, seq = text.rpartition("/")
        if not sep or not seq.isdigit():
            raise ValueError(f"Malformed note id {text!r}")
        return cls(parse_device_id(creator), int(seq))


class BodyKind(Enum):
    TEXT = "text"
    AUDIO = "audio"


@dataclass(frozen=True)
class TextBody:
    text: str

    @property
    def kind(self) -> BodyKind:
        return BodyKind.TEXT


@dataclass(frozen=True)
class AudioBody:
    """Recorded clip; the payload is opaque."""

    payload: bytes
    duration_ms: int

    @property
    def kind(self) -> BodyKind:
        return BodyKind.AUDIO


NoteBody = TextBody | AudioBody


def body_to_dict(body: NoteBody) -> dict[str, Any]:
    if isinstance(body, TextBody):
        return {"kind": "text", "text": body.text}
    return {
        "kind": "audio",
        "payload": base64.b64encode(body.payload).decode("ascii"),
        "duration_ms": body.duration_ms,
    }


def body_from_dict(data: dict[str, Any]) -> NoteBody:
    if data["kind"] == "text":
        return TextBody(str(data["text"]))
    if data["kind"] == "audio":
        return AudioBody(base64.b64decode(data["payload"]), int(data["duration_ms"]))
    raise InvalidNote(f"Unknown note body kind {data['kind']!r}")


@dataclass(frozen=True)
class TimeWindow:
    """Single absolute interval [start, end) in epoch milliseconds."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if self.end <= self.start:
            raise InvalidNote(f"Time window end {self.end} not after start {self.start}")

    def contains(self, now: int) -> bool:
        return self.start <= now < self.end


@dataclass(frozen=True)
class Note:
    """
    Text or audio note with its trigger set and recipients.

    Attributes:
        note_id: (creator, seq) identity.
        body: Text or audio payload.
        created_at: Creation time (epoch ms).
        person_triggers: Contact ids whose presence satisfies the person category.
        location_triggers: Location ids; any one satisfies the location category.
        time_window: Optional absolute window.
        recipients: Contact ids the note is sent to (empty: fires on the creator's device).
        carrier: Contact the note rides on; must also be a person trigger.
        public: Relayed by the broker to every registered device.
    """

    note_id: NoteId
    body: NoteBody
    created_at: int
    person_triggers: frozenset[int] = field(default_factory=frozenset)
    location_triggers: frozenset[int] = field(default_factory=frozenset)
    time_window: TimeWindow | None = None
    recipients: frozenset[int] = field(default_factory=frozenset)
    carrier: int | None = None
    public: bool = False

    def __post_init__(self) -> None:
        if self.carrier is not None and self.carrier not in self.person_triggers:
            raise MissingCarrierTrigger(
                f"Carrier {self.carrier} of note {self.note_id} is not a person trigger"
            )

    @property
    def is_manual(self) -> bool:
        """A note with no trigger of any category is only viewed on demand."""
        return not (self.person_triggers or self.location_triggers or self.time_window)

    @property
    def is_shared(self) -> bool:
        return bool(self.recipients) or self.public

    def to_dict(self) -> dict[str, Any]:
        return {
            "creator": self.note_id.creator.value,
            "seq": self.note_id.seq,
            "body": body_to_dict(self.body),
            "created_at": self.created_at,
            "person_triggers": sorted(self.person_triggers),
            "location_triggers": sorted(self.location_triggers),
            "time_window": (
                [self.time_window.start, self.time_window.end] if self.time_window else None
            ),
            "recipients": sorted(self.recipients),
            "carrier": self.carrier,
            "public": self.public,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Note":
        window = data.get("time_window")
        return cls(
            note_id=NoteId(parse_device_id(data["creator"]), int(data["seq"])),
            body=body_from_dict(data["body"]),
            created_at=int(data["created_at"]),
            person_triggers=frozenset(int(c) for c in data.get("person_triggers", [])),
            location_triggers=frozenset(int(loc) for loc in data.get("location_triggers", [])),
            time_window=TimeWindow(int(window[0]), int(window[1])) if window else None,
            recipients=frozenset(int(c) for c in data.get("recipients", [])),
            carrier=data.get("carrier"),
            public=bool(data.get("public", False)),
        )


class NotificationKind(Enum):
    PERSON_NEARBY = "person_nearby"
    NOTE_FIRED = "note_fired"


class AlertKind(Enum):
    """The three notification flavours that have distinct vibration codes."""

    PERSON_NEARBY = "person_nearby"
    AUDIO_NOTE = "audio_note"
    TEXT_NOTE = "text_note"


@dataclass(frozen=True)
class Notification:
    """
    Fired event. History rows are append-only; acknowledging flips a flag only.

    Attributes:
        kind: PersonNearby or NoteFired.
        at: Time fired (epoch ms).
        device: Device that came near (PersonNearby).
        contact_id: Local contact for that device, when known.
        note_id: Note that fired (NoteFired).
        body_kind: Body type of the fired note (selects the vibration code).
        acknowledged: Set by acknowledge operations.
        notification_id: History row id once stored.
    """

    kind: NotificationKind
    at: int
    device: DeviceId | None = None
    contact_id: int | None = None
    note_id: NoteId | None = None
    body_kind: BodyKind | None = None
    acknowledged: bool = False
    notification_id: int | None = None

    def __post_init__(self) -> None:
        if self.kind is NotificationKind.PERSON_NEARBY and self.device is None:
            raise ValueError("PersonNearby notification needs a device")
        if self.kind is NotificationKind.NOTE_FIRED and (
            self.note_id is None or self.body_kind is None
        ):
            raise ValueError("NoteFired notification needs a note id and body kind")

    @property
    def alert_kind(self) -> AlertKind:
        if self.kind is NotificationKind.PERSON_NEARBY:
            return AlertKind.PERSON_NEARBY
        if self.body_kind is BodyKind.AUDIO:
            return AlertKind.AUDIO_NOTE
        return AlertKind.TEXT_NOTE

    @property
    def subject(self) -> str:
        """Device or note the notification is about, as text."""
        if self.kind is NotificationKind.PERSON_NEARBY:
            return str(self.device)
        return str(self.note_id)

    @classmethod
    def person_nearby(
        cls, device: DeviceId, at: int, contact_id: int | None = None
    ) -> "Notification":
        return cls(NotificationKind.PERSON_NEARBY, at, device=device, contact_id=contact_id)

    @classmethod
    def note_fired(cls, note_id: NoteId, body_kind: BodyKind, at: int) -> "Notification":
        return cls(NotificationKind.NOTE_FIRED, at, note_id=note_id, body_kind=body_kind)


@dataclass(frozen=True)
class PrivacyState:
    """
    Privacy settings of one device.

    Attributes:
        blocked: Contacts that may not detect me (enforced on their device via the broker).
        ignored: Contact -> expiry (epoch ms, exclusive). Expired entries behave as absent.
        invisible: Stop advertising this device.
        silent: Suppress feedback emission only.
        blocked_by: Devices whose owners blocked me (learned from BlockNotice pushes).
    """

    blocked: frozenset[int] = field(default_factory=frozenset)
    ignored: tuple[tuple[int, int], ...] = ()
    invisible: bool = False
    silent: bool = False
    blocked_by: frozenset[DeviceId] = field(default_factory=frozenset)

    @property
    def ignored_map(self) -> dict[int, int]:
        return dict(self.ignored)

    def is_ignored(self, contact_id: int | None, now: int) -> bool:
        if contact_id is None:
            return False
        until = self.ignored_map.get(contact_id)
        return until is not None and now < until

    def suppresses(self, device: DeviceId, contact_id: int | None, now: int) -> bool:
        """True if events for this device must not be produced at `now`."""
        return device in self.blocked_by or self.is_ignored(contact_id, now)


class Clock(Protocol):
    """Source of wall-clock time in epoch milliseconds."""

    def now(self) -> int: ...


class SystemClock:
    """Real wall clock."""

    def now(self) -> int:
        return time.time_ns() // 1_000_000


class ManualClock:
    """Clock that only moves when told to; used by the simulator and tests."""

    def __init__(self, start: int = 0) -> None:
        self._now = start

    def now(self) -> int:
        return self._now

    def advance_to(self, t: int) -> None:
        if t < self._now:
            raise ValueError(f"Clock cannot move backwards ({t} < {self._now})")
        self._now = t

    def advance(self, delta_ms: int) -> None:
        self.advance_to(self._now + delta_ms)
