"""
Unit tests for the client store.
"""

import pytest

from ctxaware.model import (
    AudioBody,
    ContactAssociation,
    DeviceId,
    GeoPoint,
    InvalidNote,
    LocationKind,
    Note,
    NoteId,
    Notification,
    PrivacyState,
    TextBody,
    TimeWindow,
)
from ctxaware.presence import PresenceEvent, PresenceEventKind
from ctxaware.store import (
    ActionRecord,
    ClientStore,
    Gesture,
    IntegrityViolation,
    NotFound,
    StoreError,
    render_action,
)
from ctxaware.sync import RowAck
from ctxaware.tables import SYNC_ORDER, TABLES, TableGroup, TableID
from ctxaware.triggers import FiringRecord

OWNER = DeviceId("02:00:00:00:00:01")
ALICE = DeviceId("02:00:00:00:00:02")
BOB = DeviceId("02:00:00:00:00:03")
BEACON = DeviceId("0A:00:00:00:00:01")
T0 = 1_374_750_000_000


def make_store() -> ClientStore:
    store = ClientStore()
    store.add_association(1, "Alice", ALICE)
    store.add_association(2, "Bob", BOB)
    return store


def make_note(store: ClientStore, **kwargs) -> Note:
    note = Note(store.next_note_id(OWNER), TextBody("milk"), T0, **kwargs)
    return store.put_note(note)


def acks_for(store: ClientStore) -> list[RowAck]:
    return [RowAck(r.table, r.key, r.version) for r in store.dirty_rows(OWNER, T0).rows]


class TestAssociations:
    """Test contact associations."""

    def test_add_and_get(self):
        """An added association reads back."""
        store = make_store()
        assert store.get_association(1).device == ALICE
        assert store.get_by_device(BOB).contact_id == 2
        assert store.get_by_device(BEACON) is None

    def test_duplicate_device_rejected(self):
        """A device can be bound to one contact only."""
        store = make_store()
        with pytest.raises(IntegrityViolation):
            store.add_association(3, "Other", ALICE)
        assert len(store.list_associations()) == 2

    def test_duplicate_contact_id_rejected(self):
        """Contact ids are unique."""
        store = make_store()
        with pytest.raises(IntegrityViolation):
            store.add_association(1, "Again", BEACON)

    def test_missing_contact(self):
        """Unknown contact id raises NotFound."""
        store = make_store()
        with pytest.raises(NotFound):
            store.get_association(99)
        with pytest.raises(NotFound):
            store.delete_association(99)

    def test_delete_in_use_rejected(self):
        """A contact used as a person trigger cannot be deleted."""
        store = make_store()
        make_note(store, person_triggers=frozenset({1}))
        with pytest.raises(IntegrityViolation):
            store.delete_association(1)
        assert store.get_association(1).display_name == "Alice"

    def test_not_found_is_lookup_error(self):
        """NotFound can be caught as LookupError."""
        with pytest.raises(LookupError):
            ClientStore().get_association(1)


class TestLocations:
    """Test saved places."""

    def test_outdoor_round_trip(self):
        """Outdoor place keeps its coordinate."""
        store = ClientStore()
        loc = store.add_location(LocationKind.OUTDOOR, "super", point=GeoPoint(38.7385, -9.154))
        assert store.get_location(loc.location_id) == loc

    def test_indoor_round_trip(self):
        """Indoor place keeps its beacon."""
        store = ClientStore()
        loc = store.add_location(LocationKind.INDOOR, "desk", beacon=BEACON)
        assert store.get_location(loc.location_id).beacon == BEACON

    def test_ids_increase(self):
        """Each place gets a fresh id."""
        store = ClientStore()
        a = store.add_location(LocationKind.INDOOR, "a", beacon=BEACON)
        b = store.add_location(LocationKind.INDOOR, "b", beacon=BEACON)
        assert b.location_id > a.location_id

    def test_invalid_rejected_before_write(self):
        """An indoor place without beacon is not stored."""
        store = ClientStore()
        with pytest.raises(InvalidNote):
            store.add_location(LocationKind.INDOOR, "bad")
        assert store.list_locations() == []
        assert store.dirty_count() == 0


class TestNotes:
    """Test note persistence."""

    def test_note_ids_are_sequential(self):
        """Sequence numbers increase per creator."""
        store = ClientStore()
        assert store.next_note_id(OWNER) == NoteId(OWNER, 1)
        assert store.next_note_id(OWNER) == NoteId(OWNER, 2)
        assert store.next_note_id(ALICE) == NoteId(ALICE, 1)

    def test_ids_not_reused_after_delete(self):
        """Deleting a note does not free its sequence number."""
        store = make_store()
        note = make_note(store)
        store.delete_note(note.note_id)
        assert store.next_note_id(OWNER).seq == note.note_id.seq + 1

    def test_round_trip_with_triggers(self):
        """Triggers, window, recipients and carrier read back."""
        store = make_store()
        loc = store.add_location(LocationKind.INDOOR, "desk", beacon=BEACON)
        note = make_note(
            store,
            person_triggers=frozenset({1, 2}),
            location_triggers=frozenset({loc.location_id}),
            time_window=TimeWindow(T0, T0 + 3_600_000),
            recipients=frozenset({2}),
            carrier=1,
        )
        assert store.get_note(note.note_id) == note

    def test_audio_body_round_trip(self):
        """Audio payload bytes survive storage."""
        store = ClientStore()
        note = store.put_note(Note(store.next_note_id(OWNER), AudioBody(b"\x00\xffclip", 1500), T0))
        assert store.get_note(note.note_id).body == AudioBody(b"\x00\xffclip", 1500)

    def test_unknown_trigger_contact_rejected(self):
        """A person trigger must be an existing contact."""
        store = make_store()
        with pytest.raises(IntegrityViolation):
            make_note(store, person_triggers=frozenset({42}))
        assert store.list_notes() == []

    def test_update_replaces_links(self):
        """Re-putting a note replaces its trigger set."""
        store = make_store()
        note = make_note(store, person_triggers=frozenset({1}))
        store.put_note(Note(note.note_id, note.body, T0, person_triggers=frozenset({2})))
        assert store.get_note(note.note_id).person_triggers == frozenset({2})

    def test_delete(self):
        """Deleted notes are gone."""
        store = make_store()
        note = make_note(store, person_triggers=frozenset({1}))
        store.delete_note(note.note_id)
        with pytest.raises(NotFound):
            store.get_note(note.note_id)
        store.delete_association(1)


class TestPrivacy:
    """Test privacy state persistence."""

    def test_default_state(self):
        """A new store has nothing blocked or ignored."""
        assert ClientStore().privacy_state() == PrivacyState()

    def test_apply_and_read(self):
        """Applied state reads back."""
        store = make_store()
        state = PrivacyState(
            blocked=frozenset({1}),
            ignored=((2, T0 + 60_000),),
            invisible=True,
            silent=True,
            blocked_by=frozenset({BEACON}),
        )
        store.apply_privacy(state)
        assert store.privacy_state() == state

    def test_block_changes_are_dirty(self):
        """Blocking is synced; silent mode is not."""
        store = make_store()
        store.clear_dirty(acks_for(store))
        store.apply_privacy(PrivacyState(silent=True))
        assert store.dirty_count() == 0
        store.apply_privacy(PrivacyState(blocked=frozenset({1}), silent=True))
        assert [(r.table, r.key) for r in store.dirty_rows(OWNER, T0).rows] == [("blocked", "1")]

    def test_blocked_by(self):
        """Block notices are recorded once and can be removed."""
        store = ClientStore()
        store.add_blocked_by(ALICE)
        store.add_blocked_by(ALICE)
        assert store.privacy_state().blocked_by == frozenset({ALICE})
        store.remove_blocked_by(ALICE)
        assert store.privacy_state().blocked_by == frozenset()


class TestDirtyTracking:
    """Test row versions, acks and tombstones."""

    def test_mutations_are_dirty(self):
        """Every syncable insert is pending upload."""
        store = make_store()
        rows = store.dirty_rows(OWNER, T0).rows
        assert [(r.table, r.key, r.version) for r in rows] == [
            ("associations", "1", 1),
            ("associations", "2", 1),
        ]
        assert rows[0].payload == {"contact_id": 1, "display_name": "Alice", "device": ALICE.value}

    def test_ack_clears(self):
        """Acknowledged versions are no longer dirty."""
        store = make_store()
        store.clear_dirty(acks_for(store))
        assert store.dirty_count() == 0
        assert store.dirty_rows(OWNER, T0).rows == ()

    def test_edit_during_upload_stays_dirty(self):
        """An ack of an older version leaves a newer edit dirty."""
        store = make_store()
        acks = acks_for(store)
        store.update_association(ContactAssociation(1, "Alice L.", ALICE))
        store.clear_dirty(acks)
        rows = store.dirty_rows(OWNER, T0).rows
        assert [(r.key, r.version) for r in rows] == [("1", 2)]

    def test_delete_leaves_tombstone(self):
        """A deleted row uploads with no payload."""
        store = ClientStore()
        loc = store.add_location(LocationKind.INDOOR, "desk", beacon=BEACON)
        store.clear_dirty(acks_for(store))
        store.delete_location(loc.location_id)
        (row,) = store.dirty_rows(OWNER, T0).rows
        assert row.deleted
        assert row.version == 2

    def test_upload_order(self):
        """Associations and locations precede notes."""
        store = make_store()
        store.add_location(LocationKind.INDOOR, "desk", beacon=BEACON)
        make_note(store, person_triggers=frozenset({1}))
        tables = [r.table for r in store.dirty_rows(OWNER, T0).rows]
        assert tables == ["associations", "associations", "locations", "notes"]

    def test_failed_write_not_dirty(self):
        """A rolled-back insert leaves no sync state."""
        store = make_store()
        store.clear_dirty(acks_for(store))
        with pytest.raises(IntegrityViolation):
            store.add_association(3, "Dup", ALICE)
        assert store.dirty_count() == 0

    def test_sync_order_from_catalog(self):
        """Only functional tables sync, in routing-safe order."""
        assert SYNC_ORDER == (
            TableID.ASSOCIATIONS,
            TableID.LOCATIONS,
            TableID.NOTES,
            TableID.BLOCKED,
        )
        assert all(TABLES[t].group is TableGroup.FUNCTIONAL for t in SYNC_ORDER)

    def test_touch_refuses_local_table(self):
        """Version counters exist only for syncable tables."""
        store = ClientStore()
        with pytest.raises(StoreError):
            with store.transaction() as conn:
                store._touch(conn, TableID.DETECTIONS, "1")
        assert store.dirty_count() == 0

    def test_history_not_dirty(self):
        """History tables are never uploaded."""
        store = ClientStore()
        store.append_action(ActionRecord(T0, "Menu", Gesture.SWIPE_UP))
        store.append_notification(Notification.person_nearby(ALICE, T0, 1))
        assert store.dirty_count() == 0


class TestTransaction:
    """Test the reentrant transaction."""

    def test_nested_rolls_back_outer(self):
        """An exception inside a nested transaction undoes the whole unit."""
        store = ClientStore()
        with pytest.raises(RuntimeError):
            with store.transaction():
                store.add_association(1, "Alice", ALICE)
                raise RuntimeError("abort")
        assert store.list_associations() == []
        assert store.dirty_count() == 0

    def test_seen_messages(self):
        """A push message id is accepted once."""
        store = ClientStore()
        assert store.mark_seen(7)
        assert not store.mark_seen(7)


class TestHistory:
    """Test append-only history tables."""

    def test_detection_lines(self):
        """Detections render in the log grammar."""
        store = ClientStore()
        at = 1_374_750_184_123
        here = GeoPoint(38.7, -9.1)
        store.append_detection(
            PresenceEvent(PresenceEventKind.ENTERED, ALICE, True, 1, at, here, "Alice")
        )
        store.append_detection(
            PresenceEvent(PresenceEventKind.EXITED, ALICE, True, 1, at + 60_000, here)
        )
        lines = store.detection_lines()
        assert [line.device for line in lines] == [ALICE, ALICE]
        exported = store.export_detections().splitlines()
        assert exported[0].startswith("Entrou conhecido - Alice 02:00:00:00:00:02")
        assert exported[1].startswith("Saiu conhecido - ")

    def test_action_log(self):
        """Actions render one per line."""
        store = ClientStore()
        action = ActionRecord(T0, "Notas", Gesture.DOUBLE_TAP)
        store.append_action(action)
        assert store.list_actions() == [action]
        assert store.export_actions() == render_action(action) + "\n"
        assert render_action(action).startswith("Acao DoubleTap - Notas\tTime: ")

    def test_notifications_and_ack(self):
        """Notifications get ids and can be acknowledged."""
        store = ClientStore()
        first = store.append_notification(Notification.person_nearby(ALICE, T0, 1))
        store.append_notification(Notification.person_nearby(BOB, T0 + 1, 2))
        assert first.notification_id is not None
        store.acknowledge(first.notification_id)
        assert [n.device for n in store.list_notifications(pending_only=True)] == [BOB]
        assert store.acknowledge_all() == 1
        assert store.list_notifications(pending_only=True) == []

    def test_acknowledge_missing(self):
        """Acknowledging an unknown id raises NotFound."""
        with pytest.raises(NotFound):
            ClientStore().acknowledge(5)

    def test_firings_and_latches(self):
        """Firing records and latches persist."""
        store = ClientStore()
        note_id = NoteId(OWNER, 1)
        store.append_firing(FiringRecord(note_id, T0, frozenset({"person:" + ALICE.value})))
        store.save_latches({note_id: frozenset({"person:" + ALICE.value})})
        history = store.firing_history()
        assert [r.fired_at for r in history.firings_of(note_id)] == [T0]
        assert history.latched == {note_id: frozenset({"person:" + ALICE.value})}


class TestDump:
    """Test the trace snapshot."""

    def test_dump_is_stable(self):
        """Two identical stores dump identically."""
        a, b = make_store(), make_store()
        make_note(a, person_triggers=frozenset({1}))
        make_note(b, person_triggers=frozenset({1}))
        assert a.dump() == b.dump()
        assert a.dump()["dirty_rows"] == 3
