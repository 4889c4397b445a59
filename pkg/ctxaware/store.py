"""
Client store.

One sqlite3 database per device. Functional tables hold contacts, places, notes and
privacy lists; history tables (detections, actions, notifications, firings) are
append-only. Syncable rows carry a version counter in sync_state: every mutation
bumps it, and a row is dirty while its version is ahead of the last acknowledged one.
Deletes of syncable rows leave a tombstone so the deletion itself is uploaded.

All writes go through `transaction()`, which is reentrant and rolls back on any
exception, so each public operation either fully applies or leaves the store unchanged.
"""

import json
import logging
import sqlite3
import threading
from collections.abc import Iterable, Iterator
from contextlib import contextmanager
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Any

from ctxaware import logfmt
from ctxaware.model import (
    BodyKind,
    ContactAssociation,
    CtxError,
    DeviceId,
    GeoPoint,
    LocationDef,
    LocationKind,
    Note,
    NoteId,
    Notification,
    NotificationKind,
    PrivacyState,
    TimeWindow,
    body_from_dict,
    body_to_dict,
    parse_device_id,
)
from ctxaware.presence import PresenceEvent
from ctxaware.sync import NoteDelivery, ReceivedNote, RowAck, SyncEnvelope, SyncRow
from ctxaware.tables import SYNC_RANK, TABLES, TableID
from ctxaware.triggers import FiringHistory, FiringRecord

logger = logging.getLogger(__name__)

STORE_FILENAME = "store.sqlite3"

class StoreError(CtxError):
    """Base exception for store errors."""

    pass


class IntegrityViolation(StoreError):
    """Write would break a uniqueness or reference constraint."""

    pass


class NotFound(StoreError, LookupError):
    """Row does not exist."""

    def __init__(self, table: str, key: object):
        self.table = table
        self.key = key
        super().__init__(f"No row {key} in {table}")


class Gesture(Enum):
    """The six gestures of the handset interface."""

    SWIPE_UP = "SwipeUp"
    SWIPE_DOWN = "SwipeDown"
    SWIPE_LEFT = "SwipeLeft"
    SWIPE_RIGHT = "SwipeRight"
    DOUBLE_TAP = "DoubleTap"
    LONG_PRESS = "LongPress"


@dataclass(frozen=True)
class ActionRecord:
    at: int
    screen: str
    command: Gesture


def _dumps(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"))


def render_action(action: ActionRecord) -> str:
    return (
        f"Acao {action.command.value} - {action.screen}"
        f"\tTime: {logfmt.format_timestamp(action.at)}"
    )


class ClientStore:
    """
    Persistent state of one device.

    Thread-safe: a single connection guarded by a reentrant lock.
    """

    def __init__(self, path: str | Path = ":memory:") -> None:
        """
        Open (and create if needed) a store.

        Args:
            path: Database file, or ":memory:" for a throwaway store.
        """
        self.path = str(path)
        self._lock = threading.RLock()
        self._depth = 0
        self._conn = sqlite3.connect(self.path, isolation_level=None, check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        self._conn.execute("PRAGMA foreign_keys = ON")
        with self.transaction() as conn:
            for table in TABLES.values():
                conn.execute(table.ddl)
        logger.debug(f"Store opened: {self.path}")

    @classmethod
    def open(cls, data_dir: Path) -> "ClientStore":
        data_dir.mkdir(parents=True, exist_ok=True)
        return cls(data_dir / STORE_FILENAME)

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    def __enter__(self) -> "ClientStore":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    @contextmanager
    def transaction(self) -> Iterator[sqlite3.Connection]:
        """
        Reentrant write transaction.

        Raises:
            IntegrityViolation: On any sqlite constraint failure (transaction rolled back).
        """
        with self._lock:
            if self._depth:
                self._depth += 1
                try:
                    yield self._conn
                finally:
                    self._depth -= 1
                return
            self._conn.execute("BEGIN IMMEDIATE")
            self._depth = 1
            try:
                yield self._conn
            except sqlite3.IntegrityError as e:
                self._conn.execute("ROLLBACK")
                raise IntegrityViolation(str(e)) from e
            except BaseException:
                self._conn.execute("ROLLBACK")
                raise
            else:
                self._conn.execute("COMMIT")
            finally:
                self._depth = 0

    def _query(self, sql: str, params: tuple[Any, ...] = ()) -> list[sqlite3.Row]:
        with self._lock:
            return self._conn.execute(sql, params).fetchall()

    def _touch(
        self, conn: sqlite3.Connection, table: TableID, key: str, deleted: bool = False
    ) -> None:
        if not TABLES[table].syncable:
            raise StoreError(f"Table {table.value} is not syncable")
        conn.execute(
            "INSERT INTO sync_state (tbl, row_key, version, acked_version, deleted) "
            "VALUES (?, ?, 1, 0, ?) "
            "ON CONFLICT (tbl, row_key) "
            "DO UPDATE SET version = version + 1, deleted = excluded.deleted",
            (table.value, key, int(deleted)),
        )

    # associations

    def add_association(
        self, contact_id: int, display_name: str, device: DeviceId
    ) -> ContactAssociation:
        """
        Bind a contact to a device.

        Raises:
            IntegrityViolation: Contact id or device already associated.
        """
        assoc = ContactAssociation(contact_id, display_name, device)
        with self.transaction() as conn:
            conn.execute(
                "INSERT INTO associations (contact_id, display_name, device) VALUES (?, ?, ?)",
                (contact_id, display_name, device.value),
            )
            self._touch(conn, TableID.ASSOCIATIONS, str(contact_id))
        return assoc

    def update_association(self, assoc: ContactAssociation) -> ContactAssociation:
        with self.transaction() as conn:
            cur = conn.execute(
                "UPDATE associations SET display_name = ?, device = ? WHERE contact_id = ?",
                (assoc.display_name, assoc.device.value, assoc.contact_id),
            )
            if cur.rowcount == 0:
                raise NotFound("associations", assoc.contact_id)
            self._touch(conn, TableID.ASSOCIATIONS, str(assoc.contact_id))
        return assoc

    def delete_association(self, contact_id: int) -> None:
        """
        Raises:
            NotFound: No such contact.
            IntegrityViolation: Contact still used by a note or privacy list.
        """
        with self.transaction() as conn:
            cur = conn.execute("DELETE FROM associations WHERE contact_id = ?", (contact_id,))
            if cur.rowcount == 0:
                raise NotFound("associations", contact_id)
            self._touch(conn, TableID.ASSOCIATIONS, str(contact_id), deleted=True)

    @staticmethod
    def _assoc(row: sqlite3.Row) -> ContactAssociation:
        return ContactAssociation(row["contact_id"], row["display_name"], DeviceId(row["device"]))

    def get_association(self, contact_id: int) -> ContactAssociation:
        rows = self._query("SELECT * FROM associations WHERE contact_id = ?", (contact_id,))
        if not rows:
            raise NotFound("associations", contact_id)
        return self._assoc(rows[0])

    def get_by_device(self, device: DeviceId) -> ContactAssociation | None:
        rows = self._query("SELECT * FROM associations WHERE device = ?", (device.value,))
        return self._assoc(rows[0]) if rows else None

    def list_associations(self) -> list[ContactAssociation]:
        rows = self._query("SELECT * FROM associations ORDER BY contact_id")
        return [self._assoc(r) for r in rows]

    def contacts_by_id(self) -> dict[int, ContactAssociation]:
        return {a.contact_id: a for a in self.list_associations()}

    def associations_by_device(self) -> dict[DeviceId, ContactAssociation]:
        return {a.device: a for a in self.list_associations()}

    def contact_ids(self) -> frozenset[int]:
        rows = self._query("SELECT contact_id FROM associations")
        return frozenset(r["contact_id"] for r in rows)

    # locations

    def add_location(
        self,
        kind: LocationKind,
        label: str,
        beacon: DeviceId | None = None,
        point: GeoPoint | None = None,
    ) -> LocationDef:
        """
        Save a place and return it with its new id.

        Raises:
            InvalidNote: Indoor without beacon, outdoor without point, or both.
        """
        LocationDef(0, kind, label, beacon, point)
        with self.transaction() as conn:
            cur = conn.execute(
                "INSERT INTO locations (kind, label, beacon, lat, lon) VALUES (?, ?, ?, ?, ?)",
                (
                    kind.value,
                    label,
                    beacon.value if beacon else None,
                    point.lat if point else None,
                    point.lon if point else None,
                ),
            )
            location_id = int(cur.lastrowid or 0)
            self._touch(conn, TableID.LOCATIONS, str(location_id))
        return LocationDef(location_id, kind, label, beacon, point)

    @staticmethod
    def _location(row: sqlite3.Row) -> LocationDef:
        return LocationDef(
            location_id=row["location_id"],
            kind=LocationKind(row["kind"]),
            label=row["label"],
            beacon=DeviceId(row["beacon"]) if row["beacon"] else None,
            point=GeoPoint(row["lat"], row["lon"]) if row["lat"] is not None else None,
        )

    def get_location(self, location_id: int) -> LocationDef:
        rows = self._query("SELECT * FROM locations WHERE location_id = ?", (location_id,))
        if not rows:
            raise NotFound("locations", location_id)
        return self._location(rows[0])

    def list_locations(self) -> list[LocationDef]:
        rows = self._query("SELECT * FROM locations ORDER BY location_id")
        return [self._location(r) for r in rows]

    def locations_by_id(self) -> dict[int, LocationDef]:
        return {loc.location_id: loc for loc in self.list_locations()}

    def delete_location(self, location_id: int) -> None:
        with self.transaction() as conn:
            cur = conn.execute("DELETE FROM locations WHERE location_id = ?", (location_id,))
            if cur.rowcount == 0:
                raise NotFound("locations", location_id)
            self._touch(conn, TableID.LOCATIONS, str(location_id), deleted=True)

    # notes

    def next_note_id(self, creator: DeviceId) -> NoteId:
        """Allocate the next note id for a creator; ids are never reused."""
        with self.transaction() as conn:
            row = conn.execute(
                "SELECT next_seq FROM note_counters WHERE creator = ?", (creator.value,)
            ).fetchone()
            seq = row["next_seq"] if row else 1
            conn.execute(
                "INSERT INTO note_counters (creator, next_seq) VALUES (?, ?) "
                "ON CONFLICT (creator) DO UPDATE SET next_seq = excluded.next_seq",
                (creator.value, seq + 1),
            )
        return NoteId(creator, seq)

    def put_note(self, note: Note) -> Note:
        """
        Insert or replace a note with its trigger and recipient links.

        Raises:
            IntegrityViolation: A linked contact or location does not exist.
        """
        key = (note.note_id.creator.value, note.note_id.seq)
        window = note.time_window
        with self.transaction() as conn:
            conn.execute(
                "INSERT INTO notes "
                "(creator, seq, body, created_at, window_start, window_end, carrier, public) "
                "VALUES (?, ?, ?, ?, ?, ?, ?, ?) "
                "ON CONFLICT (creator, seq) DO UPDATE SET body = excluded.body, "
                "created_at = excluded.created_at, window_start = excluded.window_start, "
                "window_end = excluded.window_end, carrier = excluded.carrier, "
                "public = excluded.public",
                (
                    *key,
                    _dumps(body_to_dict(note.body)),
                    note.created_at,
                    window.start if window else None,
                    window.end if window else None,
                    note.carrier,
                    int(note.public),
                ),
            )
            for table, column, ids in (
                ("note_people", "contact_id", note.person_triggers),
                ("note_locations", "location_id", note.location_triggers),
                ("note_recipients", "contact_id", note.recipients),
            ):
                conn.execute(f"DELETE FROM {table} WHERE creator = ? AND seq = ?", key)
                conn.executemany(
                    f"INSERT INTO {table} (creator, seq, {column}) VALUES (?, ?, ?)",
                    [(*key, i) for i in sorted(ids)],
                )
            self._touch(conn, TableID.NOTES, str(note.note_id))
        return note

    def get_note(self, note_id: NoteId) -> Note:
        key = (note_id.creator.value, note_id.seq)
        with self._lock:
            row = self._conn.execute(
                "SELECT * FROM notes WHERE creator = ? AND seq = ?", key
            ).fetchone()
            if row is None:
                raise NotFound("notes", note_id)
            links = {
                table: frozenset(
                    r[0]
                    for r in self._conn.execute(
                        f"SELECT {column} FROM {table} WHERE creator = ? AND seq = ?", key
                    )
                )
                for table, column in (
                    ("note_people", "contact_id"),
                    ("note_locations", "location_id"),
                    ("note_recipients", "contact_id"),
                )
            }
        return Note(
            note_id=note_id,
            body=body_from_dict(json.loads(row["body"])),
            created_at=row["created_at"],
            person_triggers=links["note_people"],
            location_triggers=links["note_locations"],
            time_window=(
                TimeWindow(row["window_start"], row["window_end"])
                if row["window_start"] is not None
                else None
            ),
            recipients=links["note_recipients"],
            carrier=row["carrier"],
            public=bool(row["public"]),
        )

    def list_notes(self) -> list[Note]:
        rows = self._query("SELECT creator, seq FROM notes ORDER BY creator, seq")
        return [self.get_note(NoteId(DeviceId(r["creator"]), r["seq"])) for r in rows]

    def delete_note(self, note_id: NoteId) -> None:
        """Delete a note; trigger and recipient links cascade, history is untouched."""
        with self.transaction() as conn:
            cur = conn.execute(
                "DELETE FROM notes WHERE creator = ? AND seq = ?",
                (note_id.creator.value, note_id.seq),
            )
            if cur.rowcount == 0:
                raise NotFound("notes", note_id)
            self._touch(conn, TableID.NOTES, str(note_id), deleted=True)

    # received notes

    def put_received(self, received: ReceivedNote) -> None:
        note_id = received.note_id
        with self.transaction() as conn:
            conn.execute(
                "INSERT OR REPLACE INTO received_notes "
                "(creator, seq, payload, sender, received_at, msg_id) "
                "VALUES (?, ?, ?, ?, ?, ?)",
                (
                    note_id.creator.value,
                    note_id.seq,
                    _dumps(received.delivery.to_dict()),
                    received.delivery.sender.value,
                    received.received_at,
                    received.msg_id,
                ),
            )

    def list_received(self) -> list[ReceivedNote]:
        return [
            ReceivedNote(
                NoteDelivery.from_dict(json.loads(r["payload"])), r["received_at"], r["msg_id"]
            )
            for r in self._query("SELECT * FROM received_notes ORDER BY creator, seq")
        ]

    def delete_received(self, note_id: NoteId) -> None:
        with self.transaction() as conn:
            cur = conn.execute(
                "DELETE FROM received_notes WHERE creator = ? AND seq = ?",
                (note_id.creator.value, note_id.seq),
            )
            if cur.rowcount == 0:
                raise NotFound("received_notes", note_id)

    # privacy

    def privacy_state(self) -> PrivacyState:
        return PrivacyState(
            blocked=frozenset(r[0] for r in self._query("SELECT contact_id FROM blocked")),
            ignored=tuple(
                (r[0], r[1])
                for r in self._query("SELECT contact_id, until FROM ignored ORDER BY contact_id")
            ),
            invisible=bool(self.get_setting("invisible", False)),
            silent=bool(self.get_setting("silent", False)),
            blocked_by=frozenset(
                DeviceId(r[0]) for r in self._query("SELECT device FROM blocked_by")
            ),
        )

    def apply_privacy(self, new: PrivacyState) -> PrivacyState:
        """
        Persist a privacy state, writing only what changed.

        Block list changes are syncable (the broker tells the blocked party).
        """
        with self.transaction() as conn:
            old = self.privacy_state()
            for contact_id in sorted(new.blocked - old.blocked):
                conn.execute("INSERT INTO blocked (contact_id) VALUES (?)", (contact_id,))
                self._touch(conn, TableID.BLOCKED, str(contact_id))
            for contact_id in sorted(old.blocked - new.blocked):
                conn.execute("DELETE FROM blocked WHERE contact_id = ?", (contact_id,))
                self._touch(conn, TableID.BLOCKED, str(contact_id), deleted=True)
            if new.ignored != old.ignored:
                conn.execute("DELETE FROM ignored")
                conn.executemany(
                    "INSERT INTO ignored (contact_id, until) VALUES (?, ?)", new.ignored
                )
            if new.invisible != old.invisible:
                self.set_setting("invisible", new.invisible)
            if new.silent != old.silent:
                self.set_setting("silent", new.silent)
            if new.blocked_by != old.blocked_by:
                conn.execute("DELETE FROM blocked_by")
                conn.executemany(
                    "INSERT INTO blocked_by (device) VALUES (?)",
                    [(d.value,) for d in sorted(new.blocked_by)],
                )
        return new

    def add_blocked_by(self, device: DeviceId) -> None:
        with self.transaction() as conn:
            conn.execute("INSERT OR IGNORE INTO blocked_by (device) VALUES (?)", (device.value,))

    def remove_blocked_by(self, device: DeviceId) -> None:
        with self.transaction() as conn:
            conn.execute("DELETE FROM blocked_by WHERE device = ?", (device.value,))

    # settings and bookkeeping

    def get_setting(self, key: str, default: Any = None) -> Any:
        rows = self._query("SELECT value FROM settings WHERE key = ?", (key,))
        return json.loads(rows[0]["value"]) if rows else default

    def set_setting(self, key: str, value: Any) -> None:
        with self.transaction() as conn:
            conn.execute(
                "INSERT INTO settings (key, value) VALUES (?, ?) "
                "ON CONFLICT (key) DO UPDATE SET value = excluded.value",
                (key, _dumps(value)),
            )

    def mark_seen(self, msg_id: int) -> bool:
        """Record a push message id; False if it was already recorded."""
        with self.transaction() as conn:
            cur = conn.execute("INSERT OR IGNORE INTO seen_messages (msg_id) VALUES (?)", (msg_id,))
            return cur.rowcount == 1

    # history

    def append_detection(self, event: PresenceEvent) -> None:
        line = logfmt.LogLine.from_event(event)
        with self.transaction() as conn:
            conn.execute(
                "INSERT INTO detections (direction, known, device, at, lat, lon, name) "
                "VALUES (?, ?, ?, ?, ?, ?, ?)",
                (
                    line.direction.value,
                    int(line.known),
                    line.device.value,
                    line.at,
                    line.coord.lat,
                    line.coord.lon,
                    line.name,
                ),
            )

    def detection_lines(self) -> list[logfmt.LogLine]:
        return [
            logfmt.LogLine(
                direction=logfmt.Direction(r["direction"]),
                known=bool(r["known"]),
                device=DeviceId(r["device"]),
                at=r["at"],
                coord=GeoPoint(r["lat"], r["lon"]),
                name=r["name"],
            )
            for r in self._query("SELECT * FROM detections ORDER BY row_id")
        ]

    def append_action(self, action: ActionRecord) -> None:
        with self.transaction() as conn:
            conn.execute(
                "INSERT INTO actions (at, screen, command) VALUES (?, ?, ?)",
                (action.at, action.screen, action.command.value),
            )

    def list_actions(self) -> list[ActionRecord]:
        return [
            ActionRecord(r["at"], r["screen"], Gesture(r["command"]))
            for r in self._query("SELECT * FROM actions ORDER BY row_id")
        ]

    def append_notification(self, notification: Notification) -> Notification:
        with self.transaction() as conn:
            cur = conn.execute(
                "INSERT INTO notifications "
                "(kind, at, device, contact_id, note_id, body_kind, acknowledged) "
                "VALUES (?, ?, ?, ?, ?, ?, ?)",
                (
                    notification.kind.value,
                    notification.at,
                    notification.device.value if notification.device else None,
                    notification.contact_id,
                    str(notification.note_id) if notification.note_id else None,
                    notification.body_kind.value if notification.body_kind else None,
                    int(notification.acknowledged),
                ),
            )
        return replace(notification, notification_id=cur.lastrowid)

    def list_notifications(self, pending_only: bool = False) -> list[Notification]:
        sql = "SELECT * FROM notifications"
        if pending_only:
            sql += " WHERE acknowledged = 0"
        return [
            Notification(
                kind=NotificationKind(r["kind"]),
                at=r["at"],
                device=DeviceId(r["device"]) if r["device"] else None,
                contact_id=r["contact_id"],
                note_id=NoteId.parse(r["note_id"]) if r["note_id"] else None,
                body_kind=BodyKind(r["body_kind"]) if r["body_kind"] else None,
                acknowledged=bool(r["acknowledged"]),
                notification_id=r["row_id"],
            )
            for r in self._query(sql + " ORDER BY row_id")
        ]

    def acknowledge(self, notification_id: int) -> None:
        with self.transaction() as conn:
            cur = conn.execute(
                "UPDATE notifications SET acknowledged = 1 WHERE row_id = ?", (notification_id,)
            )
            if cur.rowcount == 0:
                raise NotFound("notifications", notification_id)

    def acknowledge_all(self) -> int:
        """Acknowledge every pending notification; returns how many changed."""
        with self.transaction() as conn:
            cur = conn.execute("UPDATE notifications SET acknowledged = 1 WHERE acknowledged = 0")
            return cur.rowcount

    def append_firing(self, record: FiringRecord) -> None:
        with self.transaction() as conn:
            conn.execute(
                "INSERT INTO firings (note_id, fired_at, keys) VALUES (?, ?, ?)",
                (
                    str(record.note_id),
                    record.fired_at,
                    _dumps(sorted(record.satisfying_session_keys)),
                ),
            )

    def firing_history(self) -> FiringHistory:
        records = [
            FiringRecord(
                NoteId.parse(r["note_id"]), r["fired_at"], frozenset(json.loads(r["keys"]))
            )
            for r in self._query("SELECT * FROM firings ORDER BY row_id")
        ]
        latched = {
            NoteId.parse(k): frozenset(v) for k, v in self.get_setting("latched", {}).items()
        }
        return FiringHistory(records, latched)

    def save_latches(self, latched: dict[NoteId, frozenset[str]]) -> None:
        self.set_setting("latched", {str(k): sorted(v) for k, v in latched.items()})

    def export_detections(self) -> str:
        return logfmt.render_lines(self.detection_lines())

    def export_actions(self) -> str:
        return "".join(render_action(a) + "\n" for a in self.list_actions())

    def export_history(self) -> str:
        """Detection log followed by the action log, as UTF-8 text."""
        return self.export_detections() + self.export_actions()

    # sync

    def _row_payload(self, table: TableID, key: str) -> dict[str, Any] | None:
        try:
            if table is TableID.ASSOCIATIONS:
                return self.get_association(int(key)).to_dict()
            if table is TableID.LOCATIONS:
                return self.get_location(int(key)).to_dict()
            if table is TableID.NOTES:
                return self.get_note(NoteId.parse(key)).to_dict()
            if table is TableID.BLOCKED:
                contact_id = int(key)
                if not self._query("SELECT 1 FROM blocked WHERE contact_id = ?", (contact_id,)):
                    return None
                device = self.get_association(contact_id).device
                return {"contact_id": contact_id, "device": device.value}
        except NotFound:
            return None
        raise StoreError(f"Table {table.value} is not syncable")

    def dirty_rows(self, sender: DeviceId, sent_at: int) -> SyncEnvelope:
        """Envelope holding every syncable row whose version is ahead of its ack."""
        with self._lock:
            rows = self._query(
                "SELECT tbl, row_key, version, deleted FROM sync_state "
                "WHERE version > acked_version"
            )
            rows = sorted(rows, key=lambda r: (SYNC_RANK[r["tbl"]], r["row_key"]))
            sync_rows = tuple(
                SyncRow(
                    r["tbl"],
                    r["row_key"],
                    r["version"],
                    (
                        None
                        if r["deleted"]
                        else self._row_payload(TableID(r["tbl"]), r["row_key"])
                    ),
                )
                for r in rows
            )
        return SyncEnvelope(sender, sync_rows, sent_at)

    def clear_dirty(self, acks: Iterable[RowAck]) -> None:
        """Mark acknowledged versions; newer local versions stay dirty."""
        with self.transaction() as conn:
            conn.executemany(
                "UPDATE sync_state SET acked_version = MAX(acked_version, ?) "
                "WHERE tbl = ? AND row_key = ?",
                [(a.version, a.table, a.key) for a in acks],
            )

    def dirty_count(self) -> int:
        rows = self._query("SELECT COUNT(*) FROM sync_state WHERE version > acked_version")
        return int(rows[0][0])

    def dump(self) -> dict[str, Any]:
        """Deterministic JSON-ready snapshot of functional state (for traces)."""
        privacy = self.privacy_state()
        return {
            "associations": [a.to_dict() for a in self.list_associations()],
            "locations": [loc.to_dict() for loc in self.list_locations()],
            "notes": [n.to_dict() for n in self.list_notes()],
            "received_notes": [r.delivery.to_dict() for r in self.list_received()],
            "privacy": {
                "blocked": sorted(privacy.blocked),
                "ignored": [list(i) for i in privacy.ignored],
                "invisible": privacy.invisible,
                "silent": privacy.silent,
                "blocked_by": sorted(d.value for d in privacy.blocked_by),
            },
            "notifications": [
                {
                    "id": n.notification_id,
                    "kind": n.kind.value,
                    "at": n.at,
                    "subject": n.subject,
                    "acknowledged": n.acknowledged,
                }
                for n in self.list_notifications()
            ],
            "dirty_rows": self.dirty_count(),
        }


def parse_owner(store: ClientStore) -> DeviceId | None:
    """Device id this store was initialised for, if any."""
    owner = store.get_setting("owner")
    return parse_device_id(owner) if owner else None
