"""
Tests for the device application: scans, notes, privacy and feedback wired together.
"""

import pytest

from ctxaware.config import Config
from ctxaware.device import DeviceApp
from ctxaware.model import (
    DeviceId,
    GeoPoint,
    InvalidNote,
    ManualClock,
    MissingCarrierTrigger,
    Note,
    NoteId,
    NotificationKind,
    TextBody,
    UnknownContact,
)
from ctxaware.presence import ScanResult
from ctxaware.store import ClientStore, Gesture, NotFound, StoreError
from ctxaware.sync import NoteDelivery, ReceivedNote

ME = DeviceId("02:00:00:00:00:01")
ALICE = DeviceId("02:00:00:00:00:02")
BOB = DeviceId("02:00:00:00:00:03")
T0 = 1_374_750_000_000
HOME = GeoPoint(38.7600, -9.1400)


def make_app(store: ClientStore | None = None, **config) -> DeviceApp:
    app = DeviceApp(
        ME, store or ClientStore(), Config.model_validate(config), ManualClock(T0), position=HOME
    )
    if not app.store.list_associations():
        app.add_contact(1, "Alice", ALICE)
        app.add_contact(2, "Bob", BOB)
    return app


def scan(app: DeviceApp, offset_s: int, *devices: DeviceId):
    app.clock.advance_to(T0 + offset_s * 1000)
    return app.on_scan(ScanResult.of(app.clock.now(), devices))


class TestScans:
    """Test scan processing end to end."""

    def test_person_nearby_once_per_session(self):
        """A contact entering raises one PersonNearby with a vibration."""
        app = make_app()
        (n,) = scan(app, 0, ALICE)
        assert n.kind is NotificationKind.PERSON_NEARBY
        assert n.device == ALICE and n.contact_id == 1
        assert scan(app, 30, ALICE) == []
        assert [str(p) for _, p in app.sink.emissions] == ["V500"]

    def test_unknown_device_silent_by_default(self):
        """Strangers are logged but raise nothing."""
        app = make_app()
        stranger = DeviceId("0A:0B:0C:0D:0E:0F")
        assert scan(app, 0, stranger) == []
        assert app.store.detection_lines()[0].known is False

    def test_unknown_device_with_notify_unknown(self):
        """notify_unknown raises PersonNearby for strangers too."""
        app = make_app(presence={"notify_unknown": True})
        (n,) = scan(app, 0, DeviceId("0A:0B:0C:0D:0E:0F"))
        assert n.contact_id is None

    def test_person_note_fires_after_nearby(self):
        """A person note fires in the same scan, after PersonNearby."""
        app = make_app()
        note = app.create_note(text="book", person=[1])
        kinds = [n.kind for n in scan(app, 0, ALICE)]
        assert kinds == [NotificationKind.PERSON_NEARBY, NotificationKind.NOTE_FIRED]
        assert app.notifications()[1].note_id == note.note_id
        assert [str(p) for _, p in app.sink.emissions] == ["V500", "V50 P100 V250"]

    def test_note_fires_again_after_leaving(self):
        """The latch resets once the condition goes false."""
        app = make_app()
        app.create_note(text="book", person=[1])
        scan(app, 0, ALICE)
        scan(app, 30)
        scan(app, 60)
        fired = [n.kind for n in scan(app, 90, ALICE)]
        assert fired.count(NotificationKind.NOTE_FIRED) == 1

    def test_audio_note_pattern(self):
        """Audio notes have their own vibration."""
        app = make_app()
        app.create_note(audio=b"clip", audio_ms=2000, person=[2])
        scan(app, 0, BOB)
        assert str(app.sink.emissions[-1][1]) == "V250"

    def test_location_note_fires_once(self):
        """Being at a saved place fires its note once."""
        app = make_app()
        place = app.save_location("home")
        app.create_note(text="water plants", locations=[place.location_id])
        assert [n.kind for n in scan(app, 0)] == [NotificationKind.NOTE_FIRED]
        assert scan(app, 30) == []

    def test_silent_mode_records_without_vibration(self):
        """Silent mode keeps notifications but plays nothing."""
        app = make_app()
        app.set_silent(True)
        assert len(scan(app, 0, ALICE)) == 1
        assert app.sink.emissions == []

    def test_ignored_contact_not_reported(self):
        """Ignored contacts raise nothing until the ignore expires."""
        app = make_app()
        app.ignore(1, T0 + 60_000)
        assert scan(app, 0, ALICE) == []
        assert app.people_near() == []
        assert [n.device for n in scan(app, 60, ALICE)] == [ALICE]

    def test_shared_note_does_not_fire_locally(self):
        """Notes sent to others only fire on the recipients' devices."""
        app = make_app()
        app.create_note(text="for bob", person=[1], recipients=[2])
        kinds = [n.kind for n in scan(app, 0, ALICE)]
        assert kinds == [NotificationKind.PERSON_NEARBY]

    def test_state_survives_restart(self, tmp_path):
        """A reopened store resumes the presence session."""
        with ClientStore.open(tmp_path) as store:
            app = make_app(store)
            scan(app, 0, ALICE)
        with ClientStore.open(tmp_path) as store:
            again = make_app(store)
            assert [p.device for p in again.people_near()] == [ALICE]
            assert scan(again, 30, ALICE) == []

    def test_failed_scan_leaves_no_trace(self, monkeypatch):
        """A write failing mid-scan rolls back the automaton with the store."""
        app = make_app()

        def broken(*args, **kwargs):
            raise StoreError("disk full")

        with monkeypatch.context() as m:
            m.setattr(app.store, "append_notification", broken)
            with pytest.raises(StoreError):
                scan(app, 0, ALICE)
        assert app.engine.open_sessions() == {}
        assert app.people_near() == []
        assert app.store.detection_lines() == []
        (n,) = scan(app, 0, ALICE)
        assert n.kind is NotificationKind.PERSON_NEARBY
        assert len(app.store.detection_lines()) == 1

    def test_failed_scan_then_restart_agrees(self, tmp_path, monkeypatch):
        """After a failed scan, memory and a reopened store see the same sessions."""
        with ClientStore.open(tmp_path) as store:
            app = make_app(store)
            scan(app, 0, ALICE)
            monkeypatch.setattr(app.store, "append_detection", lambda event: 1 / 0)
            with pytest.raises(ZeroDivisionError):
                scan(app, 30, BOB)
            in_memory = [p.device for p in app.people_near()]
        with ClientStore.open(tmp_path) as store:
            again = make_app(store)
            assert [p.device for p in again.people_near()] == in_memory == [ALICE]


class TestReceivedNotes:
    """Test notes that arrived from other devices."""

    @staticmethod
    def receive(app: DeviceApp) -> NoteId:
        sender = DeviceId("02:00:00:00:00:09")
        note = Note(
            NoteId(sender, 1),
            TextBody("ask Bob about the keys"),
            T0,
            person_triggers=frozenset({7}),
            recipients=frozenset({1}),
        )
        delivery = NoteDelivery(note, sender, person_devices=frozenset({BOB}))
        app.store.put_received(ReceivedNote(delivery, T0, 1))
        return note.note_id

    def test_received_note_fires(self):
        """A received person note fires when the person appears."""
        app = make_app()
        note_id = self.receive(app)
        fired = [n.note_id for n in scan(app, 0, BOB) if n.kind is NotificationKind.NOTE_FIRED]
        assert fired == [note_id]

    def test_dismissed_note_never_fires(self):
        """Dismissing removes the note and its latch."""
        app = make_app()
        note_id = self.receive(app)
        scan(app, 0, BOB)
        app.dismiss_received(note_id)
        assert app.store.list_received() == []
        assert note_id not in app.history.latched
        scan(app, 30)
        scan(app, 60)
        kinds = [n.kind for n in scan(app, 90, BOB)]
        assert NotificationKind.NOTE_FIRED not in kinds

    def test_dismiss_unknown(self):
        app = make_app()
        with pytest.raises(NotFound):
            app.dismiss_received(NoteId(ALICE, 5))


class TestNotes:
    """Test note creation rules."""

    def test_exactly_one_body(self):
        app = make_app()
        with pytest.raises(InvalidNote):
            app.create_note()
        with pytest.raises(InvalidNote):
            app.create_note(text="x", audio=b"y")

    def test_carrier_must_be_person_trigger(self):
        app = make_app()
        with pytest.raises(MissingCarrierTrigger):
            app.create_note(text="x", person=[1], recipients=[2], carrier=2)

    def test_carrier_needs_recipients(self):
        app = make_app()
        with pytest.raises(InvalidNote):
            app.create_note(text="x", person=[1], carrier=1)

    def test_unknown_recipient(self):
        app = make_app()
        with pytest.raises(UnknownContact):
            app.create_note(text="x", recipients=[9])

    def test_send_adds_recipients(self):
        """Sending addresses an existing note and marks it for upload."""
        app = make_app()
        note = app.create_note(text="x", person=[1])
        sent = app.send_note(note.note_id, [2])
        assert sent.recipients == frozenset({2})
        assert app.store.get_note(note.note_id).is_shared

    def test_manual_note(self):
        """A note without triggers is manual."""
        assert make_app().create_note(text="list").is_manual


class TestStoreOwnership:
    """Test the store owner check."""

    def test_foreign_store_rejected(self):
        store = ClientStore()
        DeviceApp(ALICE, store)
        with pytest.raises(StoreError, match="belongs to"):
            DeviceApp(ME, store)


class TestHistory:
    """Test exported history."""

    def test_export_has_detections_and_actions(self):
        app = make_app()
        scan(app, 0, ALICE)
        app.record_action("PeopleNear", Gesture.SWIPE_UP)
        lines = app.export_history().splitlines()
        assert lines[0].startswith("Entrou conhecido - ")
        assert lines[-1].startswith("Acao SwipeUp - PeopleNear")
