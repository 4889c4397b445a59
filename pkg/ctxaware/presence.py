"""
Presence detection: periodic radio scans to debounced enter/exit events.

A device enters on the first scan it is visible in and exits only after it has been
missing from `exit_misses` consecutive scans, which filters radio flapping. Privacy
filters (blocked-by, ignore) never produce events for a suppressed device. An open
session that becomes suppressed stays open but hidden: it keeps counting misses, is
left out of people near, and resumes or exits normally once suppression ends, so
Entered and Exited still alternate per device.
"""

import logging
import threading
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any

from ctxaware.model import (
    ContactAssociation,
    CtxError,
    DeviceId,
    GeoPoint,
    PrivacyState,
    UnknownContact,
    parse_device_id,
)

logger = logging.getLogger(__name__)


class OutOfOrderScan(CtxError):
    """Scan timestamp earlier than the previous scan."""

    def __init__(self, at: int, last_at: int):
        self.at = at
        self.last_at = last_at
        super().__init__(f"Scan at {at} precedes previous scan at {last_at}")


@dataclass(frozen=True)
class ScanResult:
    """
    One radio inquiry.

    Attributes:
        at: Scan time (epoch ms).
        visible: (device, advertised name) pairs, device ids unique.
    """

    at: int
    visible: tuple[tuple[DeviceId, str | None], ...] = ()

    def __post_init__(self) -> None:
        devices = [device for device, _ in self.visible]
        if len(devices) != len(set(devices)):
            raise ValueError(f"Duplicate device ids in scan at {self.at}")

    @classmethod
    def of(
        cls, at: int, devices: Iterable[DeviceId | tuple[DeviceId, str | None]]
    ) -> "ScanResult":
        """Build a scan from bare ids or (id, name) pairs, sorted by device."""
        pairs: list[tuple[DeviceId, str | None]] = []
        for item in devices:
            if isinstance(item, DeviceId):
                pairs.append((item, None))
            else:
                pairs.append((item[0], item[1]))
        return cls(at, tuple(sorted(pairs, key=lambda p: p[0])))

    @property
    def devices(self) -> frozenset[DeviceId]:
        return frozenset(device for device, _ in self.visible)


@dataclass(frozen=True)
class PresenceSession:
    """
    Interval during which a remote device is considered near.

    Attributes:
        device: Remote device.
        entered_at: Time of the Entered event.
        exited_at: Time of the Exited event (None while open).
        known: A contact association existed when the device entered.
        contact_id: That contact, if known.
        name: Advertised radio name seen on entry.
    """

    device: DeviceId
    entered_at: int
    exited_at: int | None = None
    known: bool = False
    contact_id: int | None = None
    name: str | None = None

    def __post_init__(self) -> None:
        if self.exited_at is not None and self.exited_at < self.entered_at:
            raise ValueError(
                f"Session for {self.device} exits at {self.exited_at} "
                f"before entering at {self.entered_at}"
            )

    @property
    def is_open(self) -> bool:
        return self.exited_at is None

    @property
    def key(self) -> str:
        return f"{self.device}@{self.entered_at}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "device": self.device.value,
            "entered_at": self.entered_at,
            "exited_at": self.exited_at,
            "known": self.known,
            "contact_id": self.contact_id,
            "name": self.name,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PresenceSession":
        return cls(
            device=parse_device_id(data["device"]),
            entered_at=int(data["entered_at"]),
            exited_at=data.get("exited_at"),
            known=bool(data.get("known", False)),
            contact_id=data.get("contact_id"),
            name=data.get("name"),
        )


class PresenceEventKind(Enum):
    ENTERED = "entered"
    EXITED = "exited"


@dataclass(frozen=True)
class PresenceEvent:
    """Debounced transition, stamped with the observer's position."""

    kind: PresenceEventKind
    device: DeviceId
    known: bool
    contact_id: int | None
    at: int
    coord: GeoPoint
    name: str | None = None


@dataclass(frozen=True)
class NearbyPerson:
    """One row of the people-near listing."""

    device: DeviceId
    known: bool
    contact_id: int | None
    since: int
    name: str | None = None


@dataclass
class _Track:
    session: PresenceSession
    misses: int = 0
    hidden: bool = False


class PresenceEngine:
    """
    Hysteresis automaton over radio scans for one observing device.

    Single writer: one caller feeds scans. Readers get immutable snapshots.
    """

    def __init__(self, exit_misses: int = 2) -> None:
        """
        Initialize engine.

        Args:
            exit_misses: Consecutive missed scans before an Exited event (K >= 1).
        """
        if exit_misses < 1:
            raise ValueError(f"exit_misses must be >= 1, got {exit_misses}")
        self.exit_misses = exit_misses
        self.last_scan_at: int | None = None
        self._tracks: dict[DeviceId, _Track] = {}
        self._closed: list[PresenceSession] = []
        self._lock = threading.Lock()
        self._snapshot: tuple[PresenceSession, ...] = ()

    def process_scan(
        self,
        scan: ScanResult,
        privacy: PrivacyState,
        associations: Mapping[DeviceId, ContactAssociation],
        observer_pos: GeoPoint,
    ) -> list[PresenceEvent]:
        """
        Advance the automaton by one scan.

        Args:
            scan: Scan result; timestamps must be nondecreasing.
            privacy: Current privacy state (ignore list, blocked-by set).
            associations: Device -> contact association lookup.
            observer_pos: Observer position, recorded on every event.

        Returns:
            Events in device order.

        Raises:
            OutOfOrderScan: If the scan is older than the previous one.
        """
        with self._lock:
            if self.last_scan_at is not None and scan.at < self.last_scan_at:
                raise OutOfOrderScan(scan.at, self.last_scan_at)

            visible = dict(scan.visible)
            events: list[PresenceEvent] = []
            for device in sorted(set(self._tracks) | set(visible)):
                track = self._tracks.get(device)
                assoc = associations.get(device)
                if assoc is not None:
                    contact = assoc.contact_id
                else:
                    contact = track.session.contact_id if track else None
                suppressed = privacy.suppresses(device, contact, scan.at)

                if track is None:
                    if suppressed or device not in visible:
                        continue
                    name = visible[device]
                    session = PresenceSession(
                        device=device,
                        entered_at=scan.at,
                        known=assoc is not None,
                        contact_id=assoc.contact_id if assoc else None,
                        name=name,
                    )
                    self._tracks[device] = _Track(session)
                    events.append(
                        PresenceEvent(
                            PresenceEventKind.ENTERED,
                            device,
                            session.known,
                            session.contact_id,
                            scan.at,
                            observer_pos,
                            name,
                        )
                    )
                    continue

                track.misses = 0 if device in visible else track.misses + 1
                if suppressed:
                    if not track.hidden:
                        logger.debug(f"Hiding suppressed session {track.session.key}")
                    track.hidden = True
                    continue
                track.hidden = False
                if track.misses >= self.exit_misses:
                    closed = replace(track.session, exited_at=scan.at)
                    self._closed.append(closed)
                    del self._tracks[device]
                    events.append(
                        PresenceEvent(
                            PresenceEventKind.EXITED,
                            device,
                            closed.known,
                            closed.contact_id,
                            scan.at,
                            observer_pos,
                        )
                    )

            self.last_scan_at = scan.at
            self._snapshot = tuple(t.session for t in self._tracks.values() if not t.hidden)

        for event in events:
            logger.debug(f"{event.kind.value} {event.device} at {event.at}")
        return events

    def current_people_near(
        self, privacy: PrivacyState | None = None, now: int | None = None
    ) -> list[NearbyPerson]:
        """
        Devices with an open session, privacy-filtered.

        Args:
            privacy: When given, ignored and blocked-by devices are filtered out.
            now: Time for ignore expiry (defaults to the last scan time).

        Returns:
            People near, ordered by arrival then device id.
        """
        snapshot = self._snapshot
        at = now if now is not None else (self.last_scan_at or 0)
        people = [
            NearbyPerson(s.device, s.known, s.contact_id, s.entered_at, s.name)
            for s in snapshot
            if privacy is None or not privacy.suppresses(s.device, s.contact_id, at)
        ]
        return sorted(people, key=lambda p: (p.since, p.device))

    def open_sessions(self) -> dict[DeviceId, PresenceSession]:
        return {s.device: s for s in self._snapshot}

    def sessions(self) -> list[PresenceSession]:
        """All sessions seen so far, closed and open, ordered by entry."""
        with self._lock:
            everything = list(self._closed) + [t.session for t in self._tracks.values()]
        return sorted(everything, key=lambda s: (s.entered_at, s.device))

    def to_dict(self) -> dict[str, Any]:
        """Serializable automaton state (for persisting between processes)."""
        with self._lock:
            return {
                "exit_misses": self.exit_misses,
                "last_scan_at": self.last_scan_at,
                "tracks": [
                    {"session": t.session.to_dict(), "misses": t.misses, "hidden": t.hidden}
                    for _, t in sorted(self._tracks.items())
                ],
                "closed": [s.to_dict() for s in self._closed],
            }

    @classmethod
    def from_dict(cls, data: dict[str, Any], exit_misses: int | None = None) -> "PresenceEngine":
        engine = cls(exit_misses or int(data.get("exit_misses", 2)))
        engine.last_scan_at = data.get("last_scan_at")
        for item in data.get("tracks", []):
            session = PresenceSession.from_dict(item["session"])
            engine._tracks[session.device] = _Track(
                session, int(item.get("misses", 0)), bool(item.get("hidden", False))
            )
        engine._closed = [PresenceSession.from_dict(s) for s in data.get("closed", [])]
        engine._snapshot = tuple(t.session for t in engine._tracks.values() if not t.hidden)
        return engine


def _check_contact(contact_id: int, contacts: set[int] | frozenset[int]) -> None:
    if contact_id not in contacts:
        raise UnknownContact(contact_id)


def set_ignore(
    privacy: PrivacyState, contact_id: int, until: int, contacts: set[int] | frozenset[int]
) -> PrivacyState:
    """Ignore a contact until `until` (exclusive)."""
    _check_contact(contact_id, contacts)
    ignored = privacy.ignored_map
    ignored[contact_id] = until
    return replace(privacy, ignored=tuple(sorted(ignored.items())))


def clear_ignore(
    privacy: PrivacyState, contact_id: int, contacts: set[int] | frozenset[int]
) -> PrivacyState:
    _check_contact(contact_id, contacts)
    ignored = privacy.ignored_map
    ignored.pop(contact_id, None)
    return replace(privacy, ignored=tuple(sorted(ignored.items())))


def set_block(
    privacy: PrivacyState, contact_id: int, contacts: set[int] | frozenset[int]
) -> PrivacyState:
    _check_contact(contact_id, contacts)
    return replace(privacy, blocked=privacy.blocked | {contact_id})


def clear_block(
    privacy: PrivacyState, contact_id: int, contacts: set[int] | frozenset[int]
) -> PrivacyState:
    _check_contact(contact_id, contacts)
    return replace(privacy, blocked=privacy.blocked - {contact_id})


def set_invisible(privacy: PrivacyState, flag: bool) -> PrivacyState:
    return replace(privacy, invisible=flag)


def set_silent(privacy: PrivacyState, flag: bool) -> PrivacyState:
    return replace(privacy, silent=flag)


