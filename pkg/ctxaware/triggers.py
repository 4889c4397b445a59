"""
Note trigger evaluation.

A note fires when every trigger category it uses is satisfied at the same instant:
person (any listed contact has an open presence session), location (any listed place:
indoor beacon nearby, or observer inside the outdoor geofence) and time window.
A fired note stays latched until its combined condition is observed false, so it
never refires while the same situation continues.
"""

import logging
import math
from collections.abc import Collection, Iterable, Mapping
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

from ctxaware.model import (
    ContactAssociation,
    DeviceId,
    GeoPoint,
    InvalidNote,
    LocationDef,
    LocationKind,
    MissingCarrierTrigger,
    Note,
    NoteId,
    Notification,
    TimeWindow,
    UnknownContact,
    UnknownLocation,
)

if TYPE_CHECKING:
    from ctxaware.presence import PresenceEngine
    from ctxaware.store import ClientStore

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_000.0


def geo_distance(a: GeoPoint, b: GeoPoint) -> float:
    """
    Great-circle distance in meters (haversine on a sphere of radius 6,371,000 m).

    Args:
        a: First point.
        b: Second point.

    Returns:
        Nonnegative distance, symmetric in its arguments.
    """
    if a == b:
        return 0.0
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = math.radians(b.lat - a.lat)
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    h = min(1.0, max(0.0, h))
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(h))


@dataclass(frozen=True)
class TriggerContext:
    """
    Everything evaluation may look at. Derived from presence state and the clock only.

    Attributes:
        now: Evaluation time (epoch ms).
        open_sessions: Devices currently near -> their local contact id (None if unknown).
        observer_pos: Observer position.
        nearby_beacons: Devices near that may tag an indoor location.
    """

    now: int
    open_sessions: Mapping[DeviceId, int | None]
    observer_pos: GeoPoint
    nearby_beacons: frozenset[DeviceId] = frozenset()

    @classmethod
    def from_presence(
        cls, engine: "PresenceEngine", now: int, observer_pos: GeoPoint
    ) -> "TriggerContext":
        people = engine.current_people_near()
        open_sessions = {p.device: p.contact_id for p in people}
        return cls(now, open_sessions, observer_pos, frozenset(open_sessions))


@dataclass(frozen=True)
class FiringRecord:
    """One firing of one note, with the condition keys that satisfied it."""

    note_id: NoteId
    fired_at: int
    satisfying_session_keys: frozenset[str]


@dataclass
class FiringHistory:
    """
    Firing records plus the latch set used for dedup.

    A note id is latched from the moment it fires until an evaluation finds its
    condition false.
    """

    records: list[FiringRecord] = field(default_factory=list)
    latched: dict[NoteId, frozenset[str]] = field(default_factory=dict)

    def firings_of(self, note_id: NoteId) -> list[FiringRecord]:
        return [r for r in self.records if r.note_id == note_id]


@dataclass(frozen=True)
class ResolvedNote:
    """
    Note with its person and location triggers resolved to devices and places.

    Own notes are resolved through local associations; received notes carry the
    sender's resolution in the delivery.
    """

    note: Note
    person_devices: frozenset[DeviceId] = frozenset()
    locations: tuple[LocationDef, ...] = ()

    @classmethod
    def resolve(
        cls,
        note: Note,
        contacts: Mapping[int, ContactAssociation],
        locations: Mapping[int, LocationDef],
    ) -> "ResolvedNote":
        devices = frozenset(
            contacts[c].device for c in note.person_triggers if c in contacts
        )
        places = tuple(locations[loc] for loc in sorted(note.location_triggers) if loc in locations)
        return cls(note, devices, places)


class TriggerEngine:
    """Stateless evaluator; state lives in the FiringHistory passed in."""

    def __init__(self, geofence_radius_m: float = 100.0) -> None:
        self.geofence_radius_m = geofence_radius_m

    def condition(self, rnote: ResolvedNote, ctx: TriggerContext) -> frozenset[str] | None:
        """
        Evaluate the combined condition of one note.

        Returns:
            The satisfying keys when every present category holds, else None.
            Notes with no triggers at all never hold.
        """
        note = rnote.note
        if note.is_manual:
            return None

        keys: set[str] = set()

        if note.person_triggers:
            hits = {f"person:{d}" for d in rnote.person_devices if d in ctx.open_sessions}
            if not hits:
                return None
            keys |= hits

        if note.location_triggers:
            hits = set()
            for loc in rnote.locations:
                if loc.kind is LocationKind.INDOOR:
                    if loc.beacon in ctx.nearby_beacons:
                        hits.add(f"beacon:{loc.beacon}")
                elif loc.point is not None:
                    if geo_distance(ctx.observer_pos, loc.point) <= self.geofence_radius_m:
                        hits.add(f"geo:{loc.location_id}")
            if not hits:
                return None
            keys |= hits

        if note.time_window is not None:
            if not note.time_window.contains(ctx.now):
                return None
            keys.add("time")

        return frozenset(keys)

    def evaluate(
        self, notes: Iterable[ResolvedNote], ctx: TriggerContext, history: FiringHistory
    ) -> list[Notification]:
        """
        Fire every note whose condition holds now and is not latched.

        Args:
            notes: Notes live on this device.
            ctx: Evaluation context.
            history: Firing history; records are appended and latches updated in place.

        Returns:
            NoteFired notifications, in note id order.
        """
        fired: list[Notification] = []
        for rnote in sorted(notes, key=lambda r: r.note.note_id):
            note_id = rnote.note.note_id
            keys = self.condition(rnote, ctx)
            if keys is None:
                history.latched.pop(note_id, None)
                continue
            if note_id in history.latched:
                continue
            history.latched[note_id] = keys
            history.records.append(FiringRecord(note_id, ctx.now, keys))
            fired.append(Notification.note_fired(note_id, rnote.note.body.kind, ctx.now))
            logger.info(f"Note {note_id} fired at {ctx.now} ({', '.join(sorted(keys))})")
        return fired


def save_current_location(store: "ClientStore", label: str, observer_pos: GeoPoint) -> LocationDef:
    """Persist the observer's position as a new outdoor location."""
    return store.add_location(LocationKind.OUTDOOR, label, point=observer_pos)


@dataclass(frozen=True)
class PersonTrigger:
    contact_id: int


@dataclass(frozen=True)
class LocationTrigger:
    location_id: int


@dataclass(frozen=True)
class TimeTrigger:
    window: TimeWindow


Trigger = PersonTrigger | LocationTrigger | TimeTrigger


def attach_trigger(
    note: Note, trigger: Trigger, contacts: Collection[int], locations: Collection[int]
) -> Note:
    """
    Add a trigger to a note.

    Raises:
        UnknownContact: Person trigger on a contact without an association.
        UnknownLocation: Location trigger on a missing location.
    """
    if isinstance(trigger, PersonTrigger):
        if trigger.contact_id not in contacts:
            raise UnknownContact(trigger.contact_id)
        return replace(note, person_triggers=note.person_triggers | {trigger.contact_id})
    if isinstance(trigger, LocationTrigger):
        if trigger.location_id not in locations:
            raise UnknownLocation(trigger.location_id)
        return replace(note, location_triggers=note.location_triggers | {trigger.location_id})
    return replace(note, time_window=trigger.window)


def detach_trigger(note: Note, trigger: Trigger) -> Note:
    """Remove a trigger; detaching the carrier's person trigger also clears the carrier."""
    if isinstance(trigger, PersonTrigger):
        carrier = None if note.carrier == trigger.contact_id else note.carrier
        return replace(
            note, person_triggers=note.person_triggers - {trigger.contact_id}, carrier=carrier
        )
    if isinstance(trigger, LocationTrigger):
        return replace(note, location_triggers=note.location_triggers - {trigger.location_id})
    return replace(note, time_window=None)


@dataclass(frozen=True)
class DeliveryPlan:
    """Where a carrier note goes: each recipient fires it on meeting the carrier."""

    note_id: NoteId
    carrier: int
    recipients: tuple[int, ...]


def route_carrier_note(note: Note) -> DeliveryPlan:
    """
    Plan delivery of a note tagged on a carrier and addressed to recipients.

    Raises:
        MissingCarrierTrigger: Carrier unset or not among the person triggers.
        InvalidNote: No recipients.
    """
    if note.carrier is None or note.carrier not in note.person_triggers:
        raise MissingCarrierTrigger(f"Note {note.note_id} has no carrier person trigger")
    if not note.recipients:
        raise InvalidNote(f"Carrier note {note.note_id} has no recipients")
    return DeliveryPlan(note.note_id, note.carrier, tuple(sorted(note.recipients)))
