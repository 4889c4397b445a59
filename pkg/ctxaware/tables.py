"""
Client store table catalog.

Functional tables hold user data and (when syncable) are mirrored to the broker;
history tables are append-only and never synced; bookkeeping tables are local state.
"""

from dataclasses import dataclass
from enum import Enum


class TableID(Enum):
    """Store table identifiers (values are the SQL table names)."""

    ASSOCIATIONS = "associations"
    LOCATIONS = "locations"
    NOTES = "notes"
    NOTE_PEOPLE = "note_people"
    NOTE_LOCATIONS = "note_locations"
    NOTE_RECIPIENTS = "note_recipients"
    RECEIVED_NOTES = "received_notes"
    BLOCKED = "blocked"
    IGNORED = "ignored"
    DETECTIONS = "detections"
    ACTIONS = "actions"
    NOTIFICATIONS = "notifications"
    FIRINGS = "firings"
    SETTINGS = "settings"
    NOTE_COUNTERS = "note_counters"
    BLOCKED_BY = "blocked_by"
    SEEN_MESSAGES = "seen_messages"
    SYNC_STATE = "sync_state"


class TableGroup(Enum):
    FUNCTIONAL = "functional"
    HISTORY = "history"
    BOOKKEEPING = "bookkeeping"


@dataclass(frozen=True)
class TableDef:
    """
    Table definition.

    Attributes:
        id: Table identifier.
        group: Functional, history or bookkeeping.
        description: What a row means.
        ddl: CREATE TABLE statement.
        syncable: Rows carry a version counter and are uploaded to the broker.
    """

    id: TableID
    group: TableGroup
    description: str
    ddl: str
    syncable: bool = False

    @property
    def name(self) -> str:
        return self.id.value


TABLES: dict[TableID, TableDef] = {
    t.id: t
    for t in (
        TableDef(
            TableID.ASSOCIATIONS,
            TableGroup.FUNCTIONAL,
            "Contact bound to a radio device (ListaMACs)",
            """CREATE TABLE IF NOT EXISTS associations (
                contact_id INTEGER PRIMARY KEY,
                display_name TEXT NOT NULL,
                device TEXT NOT NULL UNIQUE
            )""",
            syncable=True,
        ),
        TableDef(
            TableID.LOCATIONS,
            TableGroup.FUNCTIONAL,
            "Saved place: indoor beacon or outdoor coordinate",
            """CREATE TABLE IF NOT EXISTS locations (
                location_id INTEGER PRIMARY KEY AUTOINCREMENT,
                kind TEXT NOT NULL CHECK (kind IN ('indoor', 'outdoor')),
                label TEXT NOT NULL,
                beacon TEXT,
                lat REAL,
                lon REAL
            )""",
            syncable=True,
        ),
        TableDef(
            TableID.NOTES,
            TableGroup.FUNCTIONAL,
            "Notes created on this device",
            """CREATE TABLE IF NOT EXISTS notes (
                creator TEXT NOT NULL,
                seq INTEGER NOT NULL,
                body TEXT NOT NULL,
                created_at INTEGER NOT NULL,
                window_start INTEGER,
                window_end INTEGER,
                carrier INTEGER,
                public INTEGER NOT NULL DEFAULT 0,
                PRIMARY KEY (creator, seq)
            )""",
            syncable=True,
        ),
        TableDef(
            TableID.NOTE_PEOPLE,
            TableGroup.FUNCTIONAL,
            "Person triggers of a note",
            """CREATE TABLE IF NOT EXISTS note_people (
                creator TEXT NOT NULL,
                seq INTEGER NOT NULL,
                contact_id INTEGER NOT NULL REFERENCES associations(contact_id),
                PRIMARY KEY (creator, seq, contact_id),
                FOREIGN KEY (creator, seq) REFERENCES notes(creator, seq) ON DELETE CASCADE
            )""",
        ),
        TableDef(
            TableID.NOTE_LOCATIONS,
            TableGroup.FUNCTIONAL,
            "Location triggers of a note",
            """CREATE TABLE IF NOT EXISTS note_locations (
                creator TEXT NOT NULL,
                seq INTEGER NOT NULL,
                location_id INTEGER NOT NULL REFERENCES locations(location_id),
                PRIMARY KEY (creator, seq, location_id),
                FOREIGN KEY (creator, seq) REFERENCES notes(creator, seq) ON DELETE CASCADE
            )""",
        ),
        TableDef(
            TableID.NOTE_RECIPIENTS,
            TableGroup.FUNCTIONAL,
            "Contacts a note was sent to",
            """CREATE TABLE IF NOT EXISTS note_recipients (
                creator TEXT NOT NULL,
                seq INTEGER NOT NULL,
                contact_id INTEGER NOT NULL REFERENCES associations(contact_id),
                PRIMARY KEY (creator, seq, contact_id),
                FOREIGN KEY (creator, seq) REFERENCES notes(creator, seq) ON DELETE CASCADE
            )""",
        ),
        TableDef(
            TableID.RECEIVED_NOTES,
            TableGroup.FUNCTIONAL,
            "Notes delivered by the broker, with the sender's trigger resolution",
            """CREATE TABLE IF NOT EXISTS received_notes (
                creator TEXT NOT NULL,
                seq INTEGER NOT NULL,
                payload TEXT NOT NULL,
                sender TEXT NOT NULL,
                received_at INTEGER NOT NULL,
                msg_id INTEGER NOT NULL,
                PRIMARY KEY (creator, seq)
            )""",
        ),
        TableDef(
            TableID.BLOCKED,
            TableGroup.FUNCTIONAL,
            "Contacts that may not detect this device",
            """CREATE TABLE IF NOT EXISTS blocked (
                contact_id INTEGER PRIMARY KEY REFERENCES associations(contact_id)
            )""",
            syncable=True,
        ),
        TableDef(
            TableID.IGNORED,
            TableGroup.FUNCTIONAL,
            "Contacts this device does not want to detect, until an expiry",
            """CREATE TABLE IF NOT EXISTS ignored (
                contact_id INTEGER PRIMARY KEY REFERENCES associations(contact_id),
                until INTEGER NOT NULL
            )""",
        ),
        TableDef(
            TableID.DETECTIONS,
            TableGroup.HISTORY,
            "Presence transitions (one log line each)",
            """CREATE TABLE IF NOT EXISTS detections (
                row_id INTEGER PRIMARY KEY AUTOINCREMENT,
                direction TEXT NOT NULL,
                known INTEGER NOT NULL,
                device TEXT NOT NULL,
                at INTEGER NOT NULL,
                lat REAL NOT NULL,
                lon REAL NOT NULL,
                name TEXT
            )""",
        ),
        TableDef(
            TableID.ACTIONS,
            TableGroup.HISTORY,
            "User gestures",
            """CREATE TABLE IF NOT EXISTS actions (
                row_id INTEGER PRIMARY KEY AUTOINCREMENT,
                at INTEGER NOT NULL,
                screen TEXT NOT NULL,
                command TEXT NOT NULL
            )""",
        ),
        TableDef(
            TableID.NOTIFICATIONS,
            TableGroup.HISTORY,
            "Fired notifications; only the acknowledged flag ever changes",
            """CREATE TABLE IF NOT EXISTS notifications (
                row_id INTEGER PRIMARY KEY AUTOINCREMENT,
                kind TEXT NOT NULL,
                at INTEGER NOT NULL,
                device TEXT,
                contact_id INTEGER,
                note_id TEXT,
                body_kind TEXT,
                acknowledged INTEGER NOT NULL DEFAULT 0
            )""",
        ),
        TableDef(
            TableID.FIRINGS,
            TableGroup.HISTORY,
            "Note firings with the condition keys that satisfied them",
            """CREATE TABLE IF NOT EXISTS firings (
                row_id INTEGER PRIMARY KEY AUTOINCREMENT,
                note_id TEXT NOT NULL,
                fired_at INTEGER NOT NULL,
                keys TEXT NOT NULL
            )""",
        ),
        TableDef(
            TableID.SETTINGS,
            TableGroup.BOOKKEEPING,
            "Key/JSON settings (modes, automaton state, trigger latches)",
            """CREATE TABLE IF NOT EXISTS settings (
                key TEXT PRIMARY KEY,
                value TEXT NOT NULL
            )""",
        ),
        TableDef(
            TableID.NOTE_COUNTERS,
            TableGroup.BOOKKEEPING,
            "Next note sequence number per creator; never decreases",
            """CREATE TABLE IF NOT EXISTS note_counters (
                creator TEXT PRIMARY KEY,
                next_seq INTEGER NOT NULL
            )""",
        ),
        TableDef(
            TableID.BLOCKED_BY,
            TableGroup.BOOKKEEPING,
            "Devices whose owners blocked this device",
            """CREATE TABLE IF NOT EXISTS blocked_by (
                device TEXT PRIMARY KEY
            )""",
        ),
        TableDef(
            TableID.SEEN_MESSAGES,
            TableGroup.BOOKKEEPING,
            "Push message ids already applied",
            """CREATE TABLE IF NOT EXISTS seen_messages (
                msg_id INTEGER PRIMARY KEY
            )""",
        ),
        TableDef(
            TableID.SYNC_STATE,
            TableGroup.BOOKKEEPING,
            "Version counters of syncable rows; dirty while version > acked_version",
            """CREATE TABLE IF NOT EXISTS sync_state (
                tbl TEXT NOT NULL,
                row_key TEXT NOT NULL,
                version INTEGER NOT NULL,
                acked_version INTEGER NOT NULL DEFAULT 0,
                deleted INTEGER NOT NULL DEFAULT 0,
                PRIMARY KEY (tbl, row_key)
            )""",
        ),
    )
}

# Upload and apply order: contacts and places before the notes that name them.
SYNC_ORDER: tuple[TableID, ...] = tuple(t.id for t in TABLES.values() if t.syncable)
SYNC_RANK: dict[str, int] = {t.value: i for i, t in enumerate(SYNC_ORDER)}
