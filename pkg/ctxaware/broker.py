"""
Broker: device registration, note relay, block propagation and push queues.

The broker never evaluates triggers. It mirrors the routing-relevant rows each
client uploads (contacts, locations, shared notes, block list), resolves recipients
through the sender's own contact rows, and queues push messages per device.
Queued messages leave a queue only when the device acknowledges them, so delivery
is at-least-once; clients deduplicate by msg_id.
"""

import json
import logging
import socketserver
import threading
from collections import deque
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ctxaware import wire
from ctxaware.link import read_frame
from ctxaware.model import (
    Clock,
    ContactAssociation,
    CtxError,
    DeviceId,
    LocationDef,
    Note,
    NoteId,
    SystemClock,
    parse_device_id,
)
from ctxaware.sync import (
    BlockNotice,
    NoteDelivery,
    PushBody,
    PushMessage,
    RowAck,
    SyncEnvelope,
    SyncRow,
    UnblockNotice,
)
from ctxaware.tables import SYNC_RANK, TableID

logger = logging.getLogger(__name__)


class UnknownSender(CtxError):
    """Request from a device that never registered."""

    def __init__(self, device: DeviceId):
        self.device = device
        super().__init__(f"Device {device} is not registered")


class StaleRegistration(CtxError):
    """Request carries a registration id that was replaced."""

    def __init__(self, device: DeviceId, reg_id: str):
        self.device = device
        self.reg_id = reg_id
        super().__init__(f"Registration {reg_id} of {device} is no longer live")


@dataclass(frozen=True)
class Registration:
    device: DeviceId
    reg_id: str
    registered_at: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "device": self.device.value,
            "reg_id": self.reg_id,
            "registered_at": self.registered_at,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Registration":
        return cls(parse_device_id(data["device"]), str(data["reg_id"]), int(data["registered_at"]))


@dataclass
class BrokerState:
    """
    Everything the broker knows. Serializable as one JSON snapshot.

    Attributes:
        registrations: Live registration per device.
        generations: Registration count per device (reg ids are never reused).
        row_versions: Highest ingested version per (sender, table, key).
        contacts: Per-sender contact rows (routing and contact backup).
        locations: Per-sender location rows.
        shared_notes: Notes with recipients or the public flag.
        block_edges: (blocker, blocked) device pairs.
        block_rows: (blocker, row key) -> blocked device, for unblocking.
        delivered_pairs: (note, device) pairs already queued once.
        pending: Per-device FIFO of unacknowledged push messages.
        next_msg_id: Next push message id.
    """

    registrations: dict[DeviceId, Registration] = field(default_factory=dict)
    generations: dict[DeviceId, int] = field(default_factory=dict)
    row_versions: dict[tuple[DeviceId, str, str], int] = field(default_factory=dict)
    contacts: dict[DeviceId, dict[int, ContactAssociation]] = field(default_factory=dict)
    locations: dict[DeviceId, dict[int, LocationDef]] = field(default_factory=dict)
    shared_notes: dict[NoteId, Note] = field(default_factory=dict)
    block_edges: set[tuple[DeviceId, DeviceId]] = field(default_factory=set)
    block_rows: dict[tuple[DeviceId, str], DeviceId] = field(default_factory=dict)
    delivered_pairs: set[tuple[NoteId, DeviceId]] = field(default_factory=set)
    pending: dict[DeviceId, deque[PushMessage]] = field(default_factory=dict)
    next_msg_id: int = 1

    def to_dict(self) -> dict[str, Any]:
        return {
            "registrations": [r.to_dict() for _, r in sorted(self.registrations.items())],
            "generations": {d.value: g for d, g in sorted(self.generations.items())},
            "row_versions": [
                [s.value, t, k, v] for (s, t, k), v in sorted(self.row_versions.items())
            ],
            "contacts": {
                s.value: [a.to_dict() for _, a in sorted(rows.items())]
                for s, rows in sorted(self.contacts.items())
            },
            "locations": {
                s.value: [loc.to_dict() for _, loc in sorted(rows.items())]
                for s, rows in sorted(self.locations.items())
            },
            "shared_notes": [n.to_dict() for _, n in sorted(self.shared_notes.items())],
            "block_edges": sorted([a.value, b.value] for a, b in self.block_edges),
            "block_rows": [[s.value, k, d.value] for (s, k), d in sorted(self.block_rows.items())],
            "delivered_pairs": sorted([str(n), d.value] for n, d in self.delivered_pairs),
            "pending": {
                d.value: [m.to_dict() for m in q] for d, q in sorted(self.pending.items()) if q
            },
            "next_msg_id": self.next_msg_id,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "BrokerState":
        state = cls()
        for r in data.get("registrations", []):
            reg = Registration.from_dict(r)
            state.registrations[reg.device] = reg
        state.generations = {
            parse_device_id(d): int(g) for d, g in data.get("generations", {}).items()
        }
        state.row_versions = {
            (parse_device_id(s), t, k): int(v) for s, t, k, v in data.get("row_versions", [])
        }
        state.contacts = {
            parse_device_id(s): {a["contact_id"]: ContactAssociation.from_dict(a) for a in rows}
            for s, rows in data.get("contacts", {}).items()
        }
        state.locations = {
            parse_device_id(s): {loc["location_id"]: LocationDef.from_dict(loc) for loc in rows}
            for s, rows in data.get("locations", {}).items()
        }
        for n in data.get("shared_notes", []):
            note = Note.from_dict(n)
            state.shared_notes[note.note_id] = note
        state.block_edges = {
            (parse_device_id(a), parse_device_id(b)) for a, b in data.get("block_edges", [])
        }
        state.block_rows = {
            (parse_device_id(s), k): parse_device_id(d) for s, k, d in data.get("block_rows", [])
        }
        state.delivered_pairs = {
            (NoteId.parse(n), parse_device_id(d)) for n, d in data.get("delivered_pairs", [])
        }
        state.pending = {
            parse_device_id(d): deque(PushMessage.from_dict(m) for m in msgs)
            for d, msgs in data.get("pending", {}).items()
        }
        state.next_msg_id = int(data.get("next_msg_id", 1))
        return state


class Broker:
    """
    Store-and-route server.

    Every read or write of broker state, queues included, holds the state lock, so a
    snapshot never sees a queue mid-update.
    """

    def __init__(self, clock: Clock | None = None, state: BrokerState | None = None) -> None:
        self.clock = clock or SystemClock()
        self.state = state or BrokerState()
        self._state_lock = threading.RLock()

    def _enqueue(self, device: DeviceId, body: PushBody) -> PushMessage:
        with self._state_lock:
            msg = PushMessage(self.state.next_msg_id, body)
            self.state.next_msg_id += 1
            self.state.pending.setdefault(device, deque()).append(msg)
        logger.debug(f"Queued {msg.kind.value} #{msg.msg_id} for {device}")
        return msg

    def _check(self, device: DeviceId, reg_id: str) -> None:
        reg = self.state.registrations.get(device)
        if reg is None:
            raise UnknownSender(device)
        if reg.reg_id != reg_id:
            raise StaleRegistration(device, reg_id)

    def register(self, device: DeviceId) -> Registration:
        """
        Register (or re-register) a device.

        The new reg_id replaces any earlier one. Public notes from other devices are
        queued for a device the first time it registers.
        """
        with self._state_lock:
            generation = self.state.generations.get(device, 0) + 1
            self.state.generations[device] = generation
            reg_id = f"reg-{device.value.replace(':', '').lower()}-{generation}"
            reg = Registration(device, reg_id, self.clock.now())
            self.state.registrations[device] = reg
            for note in self._sorted_notes():
                if note.public:
                    self._route(note)
        logger.info(f"Registered {device} as {reg_id}")
        return reg

    def _sorted_notes(self) -> list[Note]:
        return [n for _, n in sorted(self.state.shared_notes.items())]

    def _route(self, note: Note) -> int:
        """Queue a NoteDelivery for every target that has not had this note yet."""
        sender = note.note_id.creator
        contacts = self.state.contacts.get(sender, {})
        places = self.state.locations.get(sender, {})

        targets: set[DeviceId] = set()
        for contact_id in sorted(note.recipients):
            assoc = contacts.get(contact_id)
            if assoc is None:
                logger.warning(
                    f"Note {note.note_id}: recipient contact {contact_id} not resolvable yet"
                )
                continue
            targets.add(assoc.device)
        if note.public:
            targets |= set(self.state.registrations)
        targets.discard(sender)

        delivery = NoteDelivery(
            note=note,
            sender=sender,
            person_devices=frozenset(
                contacts[c].device for c in note.person_triggers if c in contacts
            ),
            locations=tuple(places[loc] for loc in sorted(note.location_triggers) if loc in places),
        )
        queued = 0
        for device in sorted(targets):
            if (note.note_id, device) in self.state.delivered_pairs:
                continue
            self.state.delivered_pairs.add((note.note_id, device))
            self._enqueue(device, delivery)
            queued += 1
        return queued

    def _apply_row(self, sender: DeviceId, row: SyncRow) -> None:
        if row.table == TableID.ASSOCIATIONS.value:
            rows = self.state.contacts.setdefault(sender, {})
            if row.payload is None:
                rows.pop(int(row.key), None)
            else:
                assoc = ContactAssociation.from_dict(row.payload)
                rows[assoc.contact_id] = assoc
        elif row.table == TableID.LOCATIONS.value:
            places = self.state.locations.setdefault(sender, {})
            if row.payload is None:
                places.pop(int(row.key), None)
            else:
                loc = LocationDef.from_dict(row.payload)
                places[loc.location_id] = loc
        elif row.table == TableID.NOTES.value:
            note_id = NoteId.parse(row.key)
            if note_id.creator != sender:
                raise wire.WireFormatError(f"{sender} cannot upload note {note_id}")
            if row.payload is None:
                self.state.shared_notes.pop(note_id, None)
                return
            note = Note.from_dict(row.payload)
            if note.is_shared:
                self.state.shared_notes[note_id] = note
            else:
                self.state.shared_notes.pop(note_id, None)
        elif row.table == TableID.BLOCKED.value:
            if row.payload is None:
                blocked = self.state.block_rows.pop((sender, row.key), None)
                if blocked is not None:
                    self.state.block_edges.discard((sender, blocked))
                    self._enqueue(blocked, UnblockNotice(sender))
                    logger.info(f"{sender} unblocked {blocked}")
                return
            blocked = parse_device_id(row.payload["device"])
            previous = self.state.block_rows.get((sender, row.key))
            if previous is not None and previous != blocked:
                self.state.block_edges.discard((sender, previous))
                self._enqueue(previous, UnblockNotice(sender))
            self.state.block_rows[(sender, row.key)] = blocked
            if (sender, blocked) not in self.state.block_edges:
                self.state.block_edges.add((sender, blocked))
                self._enqueue(blocked, BlockNotice(sender))
                logger.info(f"{sender} blocked {blocked}")
        else:
            raise wire.WireFormatError(f"Table {row.table!r} is not syncable")

    def ingest(self, envelope: SyncEnvelope, reg_id: str) -> list[RowAck]:
        """
        Apply an uploaded envelope.

        Rows not newer than what the broker already holds are acknowledged without
        effect; newer rows win (last writer by version).

        Raises:
            UnknownSender: Sender never registered.
            StaleRegistration: reg_id was replaced.
        """
        with self._state_lock:
            sender = envelope.sender
            self._check(sender, reg_id)
            acks: list[RowAck] = []
            applied = 0
            rows = sorted(
                envelope.rows, key=lambda r: (SYNC_RANK.get(r.table, len(SYNC_RANK)), r.key)
            )
            for row in rows:
                version_key = (sender, row.table, row.key)
                if row.version > self.state.row_versions.get(version_key, 0):
                    self._apply_row(sender, row)
                    self.state.row_versions[version_key] = row.version
                    applied += 1
                acks.append(RowAck(row.table, row.key, row.version))
            queued = sum(
                self._route(note) for note in self._sorted_notes() if note.note_id.creator == sender
            )
        logger.info(
            f"Ingested {len(envelope.rows)} rows from {sender} "
            f"({applied} applied, {queued} deliveries queued)"
        )
        return sorted(acks)

    def deliver(self, device: DeviceId, reg_id: str) -> list[PushMessage]:
        """Pending messages for a device in FIFO order; they stay queued until acked."""
        with self._state_lock:
            self._check(device, reg_id)
            return list(self.state.pending.get(device, ()))

    def ack(self, device: DeviceId, reg_id: str, msg_ids: Iterable[int]) -> int:
        """Remove acknowledged messages from a device's queue."""
        done = set(msg_ids)
        with self._state_lock:
            self._check(device, reg_id)
            queue = self.state.pending.get(device)
            if not queue:
                return 0
            kept = [m for m in queue if m.msg_id not in done]
            removed = len(queue) - len(kept)
            queue.clear()
            queue.extend(kept)
        return removed

    def pending_count(self, device: DeviceId | None = None) -> int:
        with self._state_lock:
            if device is not None:
                return len(self.state.pending.get(device, ()))
            return sum(len(q) for q in self.state.pending.values())

    def handle_frame(self, request: bytes) -> bytes:
        """Decode a request frame, dispatch it and encode the reply (NACK on error)."""
        try:
            frame = wire.Frame.from_bytes(request)
        except wire.WireError as e:
            logger.warning(f"Bad request frame: {e}")
            return wire.make_nack(wire.MessageType.ERROR, type(e).__name__, str(e)).to_bytes()

        handler = self._handlers().get(frame.message_type)
        if not frame.is_request or handler is None:
            return wire.make_nack(
                wire.MessageType.ERROR, "WireFormatError", f"Not a request: 0x{frame.control:02X}"
            ).to_bytes()
        try:
            payload = handler(frame.payload)
        except (CtxError, KeyError, TypeError, ValueError) as e:
            logger.warning(f"{wire.MessageType(frame.message_type).name} refused: {e}")
            return wire.make_nack(frame.message_type, type(e).__name__, str(e)).to_bytes()
        return wire.make_reply(frame.message_type, payload).to_bytes()

    def _handlers(self) -> dict[int, Callable[[dict[str, Any]], dict[str, Any]]]:
        return {
            wire.MessageType.REGISTER: self._on_register,
            wire.MessageType.INGEST: self._on_ingest,
            wire.MessageType.DELIVER: self._on_deliver,
            wire.MessageType.ACK: self._on_ack,
        }

    def _on_register(self, payload: dict[str, Any]) -> dict[str, Any]:
        return self.register(parse_device_id(payload["device"])).to_dict()

    def _on_ingest(self, payload: dict[str, Any]) -> dict[str, Any]:
        envelope = SyncEnvelope.from_dict(payload["envelope"])
        acks = self.ingest(envelope, str(payload["reg_id"]))
        return {"acks": [a.to_list() for a in acks]}

    def _on_deliver(self, payload: dict[str, Any]) -> dict[str, Any]:
        messages = self.deliver(parse_device_id(payload["device"]), str(payload["reg_id"]))
        return {"messages": [m.to_dict() for m in messages]}

    def _on_ack(self, payload: dict[str, Any]) -> dict[str, Any]:
        removed = self.ack(
            parse_device_id(payload["device"]),
            str(payload["reg_id"]),
            [int(i) for i in payload.get("msg_ids", [])],
        )
        return {"removed": removed}

    def save_snapshot(self, path: Path) -> None:
        """Write the whole broker state as one JSON file (atomic replace)."""
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with self._state_lock:
            tmp.write_text(json.dumps(self.state.to_dict(), sort_keys=True, indent=2))
            tmp.replace(path)
        logger.info(f"Broker snapshot saved to {path}")

    @classmethod
    def load_snapshot(cls, path: Path, clock: Clock | None = None) -> "Broker":
        """Restore a broker; a missing file gives an empty broker."""
        if not path.exists():
            return cls(clock)
        state = BrokerState.from_dict(json.loads(path.read_text()))
        logger.info(f"Broker snapshot loaded from {path}")
        return cls(clock, state)


class _FrameRequestHandler(socketserver.BaseRequestHandler):
    server: "BrokerServer"

    def handle(self) -> None:
        peer = f"{self.client_address[0]}:{self.client_address[1]}"
        logger.debug(f"Client connected: {peer}")
        while True:
            try:
                request = read_frame(self.request)
            except (wire.WireError, OSError) as e:
                logger.warning(f"{peer}: {e}")
                return
            if request is None:
                logger.debug(f"Client disconnected: {peer}")
                return
            self.request.sendall(self.server.broker.handle_frame(request))
            if self.server.snapshot is not None:
                self.server.broker.save_snapshot(self.server.snapshot)


class BrokerServer(socketserver.ThreadingTCPServer):
    """Standalone broker: one thread per client connection."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(
        self, address: tuple[str, int], broker: Broker, snapshot: Path | None = None
    ) -> None:
        self.broker = broker
        self.snapshot = snapshot
        super().__init__(address, _FrameRequestHandler)
