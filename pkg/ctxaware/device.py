"""
One device: store, presence engine, trigger engine, feedback and sync wired together.

DeviceApp is the single writer of its store. Scans come in through `on_scan`; every
user-facing feature (notes, places, privacy, notifications, sync) is a method here,
so the simulator and the device CLI drive exactly the same code.
"""

import logging
from collections.abc import Iterable
from dataclasses import replace

from ctxaware.config import Config
from ctxaware.feedback import FeedbackSink, PatternTable, RecordingSink, emit
from ctxaware.link import BrokerSession
from ctxaware.model import (
    AudioBody,
    Clock,
    ContactAssociation,
    DeviceId,
    GeoPoint,
    InvalidNote,
    LocationDef,
    LocationKind,
    Note,
    NoteId,
    Notification,
    PrivacyState,
    SystemClock,
    TextBody,
    TimeWindow,
    UnknownContact,
)
from ctxaware.presence import (
    NearbyPerson,
    PresenceEngine,
    PresenceEventKind,
    ScanResult,
    clear_block,
    clear_ignore,
    set_block,
    set_ignore,
    set_invisible,
    set_silent,
)
from ctxaware.store import ActionRecord, ClientStore, Gesture, StoreError
from ctxaware.sync import SyncClient, UploadResult
from ctxaware.triggers import (
    LocationTrigger,
    PersonTrigger,
    ResolvedNote,
    TimeTrigger,
    Trigger,
    TriggerContext,
    TriggerEngine,
    attach_trigger,
    detach_trigger,
    route_carrier_note,
    save_current_location,
)
from ctxaware.wire import LinkDown

logger = logging.getLogger(__name__)

PRESENCE_KEY = "presence"
POSITION_KEY = "position"
OWNER_KEY = "owner"


class DeviceApp:
    """
    Context-aware client for one device.

    Attributes:
        device: This device's radio id.
        store: Its persistent state.
        engine: Presence automaton (persisted in the store after every scan).
        sink: Vibration feedback channel.
        sync: Sync client, once connected to a broker.
    """

    def __init__(
        self,
        device: DeviceId,
        store: ClientStore,
        config: Config | None = None,
        clock: Clock | None = None,
        sink: FeedbackSink | None = None,
        position: GeoPoint | None = None,
    ) -> None:
        self.device = device
        self.store = store
        self.config = config or Config()
        self.clock = clock or SystemClock()
        self.sink = sink or RecordingSink()
        self.patterns = PatternTable.from_config(self.config.feedback)
        self.triggers = TriggerEngine(self.config.triggers.geofence_radius_m)
        self.sync: SyncClient | None = None

        owner = store.get_setting(OWNER_KEY)
        if owner is None:
            store.set_setting(OWNER_KEY, device.value)
        elif owner != device.value:
            raise StoreError(f"Store belongs to {owner}, not {device}")

        saved_pos = store.get_setting(POSITION_KEY)
        if position is None:
            position = GeoPoint.from_list(saved_pos) if saved_pos else GeoPoint(0.0, 0.0)
        self.position = position
        self._load_scan_state()

    def _load_scan_state(self) -> None:
        """(Re)build the presence automaton and trigger latches from the store."""
        saved = self.store.get_setting(PRESENCE_KEY)
        self.engine = (
            PresenceEngine.from_dict(saved, self.config.presence.exit_misses)
            if saved
            else PresenceEngine(self.config.presence.exit_misses)
        )
        self.history = self.store.firing_history()

    # presence and triggers

    def move_to(self, position: GeoPoint) -> None:
        self.position = position
        self.store.set_setting(POSITION_KEY, position.to_list())

    @property
    def privacy(self) -> PrivacyState:
        return self.store.privacy_state()

    @property
    def is_advertising(self) -> bool:
        return not self.privacy.invisible

    def live_notes(self) -> list[ResolvedNote]:
        """Own notes that fire here (not shared) plus every received note."""
        contacts = self.store.contacts_by_id()
        locations = self.store.locations_by_id()
        own = [
            ResolvedNote.resolve(n, contacts, locations)
            for n in self.store.list_notes()
            if not n.is_shared
        ]
        return own + [r.resolved() for r in self.store.list_received()]

    def on_scan(self, scan: ScanResult, position: GeoPoint | None = None) -> list[Notification]:
        """
        Process one radio scan.

        Appends detections, raises PersonNearby for entering known devices, evaluates
        every live note and plays feedback (unless silent).

        The automaton step and everything it writes form one store transaction; if
        any part fails, the automaton and latches are reloaded from the store.

        Returns:
            Stored notifications, in emission order.
        """
        if position is not None:
            self.move_to(position)
        privacy = self.privacy
        try:
            stored = self._scan_unit(scan, privacy)
        except Exception:
            self._load_scan_state()
            raise
        for n in stored:
            logger.info(f"{self.device}: {n.kind.value} {n.subject} at {n.at}")
        return stored

    def _scan_unit(self, scan: ScanResult, privacy: PrivacyState) -> list[Notification]:
        with self.store.transaction():
            events = self.engine.process_scan(
                scan, privacy, self.store.associations_by_device(), self.position
            )
            pending: list[Notification] = []
            for event in events:
                self.store.append_detection(event)
                if event.kind is PresenceEventKind.ENTERED and (
                    event.known or self.config.presence.notify_unknown
                ):
                    pending.append(
                        Notification.person_nearby(event.device, event.at, event.contact_id)
                    )
            pending.extend(self._evaluate(scan.at))
            stored = [
                emit(n, privacy, self.sink, self.store.append_notification, self.patterns)
                for n in pending
            ]
            self.store.set_setting(PRESENCE_KEY, self.engine.to_dict())
        return stored

    def _evaluate(self, now: int) -> list[Notification]:
        ctx = TriggerContext.from_presence(self.engine, now, self.position)
        known = len(self.history.records)
        latched = dict(self.history.latched)
        fired = self.triggers.evaluate(self.live_notes(), ctx, self.history)
        for record in self.history.records[known:]:
            self.store.append_firing(record)
        if self.history.latched != latched:
            self.store.save_latches(self.history.latched)
        return fired

    def people_near(self) -> list[NearbyPerson]:
        return self.engine.current_people_near(self.privacy, self.clock.now())

    # contacts and places

    def add_contact(
        self, contact_id: int, display_name: str, device: DeviceId
    ) -> ContactAssociation:
        return self.store.add_association(contact_id, display_name, device)

    def save_location(self, label: str) -> LocationDef:
        """Save the current position as an outdoor place."""
        return save_current_location(self.store, label, self.position)

    def tag_indoor_location(self, label: str, beacon: DeviceId) -> LocationDef:
        return self.store.add_location(LocationKind.INDOOR, label, beacon=beacon)

    # notes

    def _check_contacts(self, contact_ids: Iterable[int]) -> None:
        known = self.store.contact_ids()
        for contact_id in contact_ids:
            if contact_id not in known:
                raise UnknownContact(contact_id)

    def create_note(
        self,
        text: str | None = None,
        audio: bytes | None = None,
        audio_ms: int = 0,
        person: Iterable[int] = (),
        locations: Iterable[int] = (),
        window: TimeWindow | None = None,
        recipients: Iterable[int] = (),
        carrier: int | None = None,
        public: bool = False,
    ) -> Note:
        """
        Create a text or audio note with its triggers.

        Raises:
            InvalidNote: Neither or both of text and audio given, or a carrier without recipients.
            UnknownContact, UnknownLocation: Trigger or recipient does not exist.
            MissingCarrierTrigger: Carrier not among person triggers.
        """
        if (text is None) == (audio is None):
            raise InvalidNote("A note has exactly one body: text or audio")
        body = TextBody(text) if text is not None else AudioBody(audio or b"", audio_ms)
        note = Note(self.store.next_note_id(self.device), body, self.clock.now())
        contacts = self.store.contact_ids()
        places = frozenset(self.store.locations_by_id())
        triggers: list[Trigger] = [PersonTrigger(c) for c in person]
        triggers += [LocationTrigger(loc) for loc in locations]
        if window is not None:
            triggers.append(TimeTrigger(window))
        for trigger in triggers:
            note = attach_trigger(note, trigger, contacts, places)
        recipient_set = frozenset(recipients)
        self._check_contacts(recipient_set)
        note = replace(note, recipients=recipient_set, carrier=carrier, public=public)
        if carrier is not None:
            route_carrier_note(note)
        self.store.put_note(note)
        logger.info(f"{self.device}: created note {note.note_id}")
        return note

    def attach(self, note_id: NoteId, trigger: Trigger) -> Note:
        note = attach_trigger(
            self.store.get_note(note_id),
            trigger,
            self.store.contact_ids(),
            frozenset(self.store.locations_by_id()),
        )
        return self.store.put_note(note)

    def detach(self, note_id: NoteId, trigger: Trigger) -> Note:
        return self.store.put_note(detach_trigger(self.store.get_note(note_id), trigger))

    def send_note(
        self, note_id: NoteId, recipients: Iterable[int], carrier: int | None = None
    ) -> Note:
        """
        Address a note to contacts (optionally riding on a carrier).

        The note is marked for upload; it reaches the broker on the next sync.
        """
        recipient_set = frozenset(recipients)
        self._check_contacts(recipient_set)
        note = self.store.get_note(note_id)
        note = replace(
            note,
            recipients=note.recipients | recipient_set,
            carrier=carrier if carrier is not None else note.carrier,
        )
        if note.carrier is not None:
            route_carrier_note(note)
        self.store.put_note(note)
        logger.info(f"{self.device}: note {note_id} addressed to {sorted(note.recipients)}")
        return note

    def publish_note(self, note_id: NoteId) -> Note:
        return self.store.put_note(replace(self.store.get_note(note_id), public=True))

    def delete_note(self, note_id: NoteId) -> None:
        with self.store.transaction():
            self.store.delete_note(note_id)
            if self.history.latched.pop(note_id, None) is not None:
                self.store.save_latches(self.history.latched)

    def dismiss_received(self, note_id: NoteId) -> None:
        """Drop a note received from someone else; its triggers stop firing here."""
        with self.store.transaction():
            self.store.delete_received(note_id)
            if self.history.latched.pop(note_id, None) is not None:
                self.store.save_latches(self.history.latched)
        logger.info(f"{self.device}: dismissed received note {note_id}")

    # privacy

    def ignore(self, contact_id: int, until: int) -> PrivacyState:
        contacts = self.store.contact_ids()
        return self.store.apply_privacy(set_ignore(self.privacy, contact_id, until, contacts))

    def unignore(self, contact_id: int) -> PrivacyState:
        contacts = self.store.contact_ids()
        return self.store.apply_privacy(clear_ignore(self.privacy, contact_id, contacts))

    def block(self, contact_id: int) -> PrivacyState:
        contacts = self.store.contact_ids()
        return self.store.apply_privacy(set_block(self.privacy, contact_id, contacts))

    def unblock(self, contact_id: int) -> PrivacyState:
        contacts = self.store.contact_ids()
        return self.store.apply_privacy(clear_block(self.privacy, contact_id, contacts))

    def set_invisible(self, flag: bool) -> PrivacyState:
        return self.store.apply_privacy(set_invisible(self.privacy, flag))

    def set_silent(self, flag: bool) -> PrivacyState:
        return self.store.apply_privacy(set_silent(self.privacy, flag))

    # notifications and history

    def notifications(self, pending_only: bool = False) -> list[Notification]:
        return self.store.list_notifications(pending_only)

    def acknowledge(self, notification_id: int) -> None:
        self.store.acknowledge(notification_id)

    def acknowledge_all(self) -> int:
        return self.store.acknowledge_all()

    def record_action(self, screen: str, command: Gesture) -> None:
        self.store.append_action(ActionRecord(self.clock.now(), screen, command))

    def export_history(self) -> str:
        return self.store.export_history()

    # sync

    def connect(self, session: BrokerSession) -> SyncClient:
        self.sync = SyncClient(self.store, self.device, session, self.clock)
        return self.sync

    def synchronize(self) -> UploadResult:
        """
        Upload dirty rows and apply pending pushes.

        Raises:
            LinkDown: No broker session, or the link is down.
        """
        if self.sync is None:
            raise LinkDown(f"{self.device} has no broker session")
        return self.sync.on_connectivity()
