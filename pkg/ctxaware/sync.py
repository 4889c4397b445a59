"""
Offline-first client synchronization.

Every mutation of a syncable row bumps its version counter in the store. When the
link comes up the client uploads every row whose version is ahead of the last
acknowledged one; the broker acks (table, key, version) triples and only those
versions are cleared, so an edit racing an upload stays dirty. Inbound push
messages are deduplicated by msg_id and applied in the same store transaction
that records the id.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, TypeVar

from ctxaware.model import Clock, DeviceId, LocationDef, Note, NoteId, parse_device_id
from ctxaware.triggers import ResolvedNote
from ctxaware.wire import LinkDown, WireNackError

if TYPE_CHECKING:
    from ctxaware.link import BrokerSession
    from ctxaware.store import ClientStore

logger = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass(frozen=True)
class SyncRow:
    """
    One syncable row at one version.

    Attributes:
        table: Syncable table name.
        key: Row key within the table.
        version: Row version (strictly increasing per key).
        payload: Row content; None is a deletion tombstone.
    """

    table: str
    key: str
    version: int
    payload: dict[str, Any] | None

    @property
    def deleted(self) -> bool:
        return self.payload is None

    def to_dict(self) -> dict[str, Any]:
        return {
            "table": self.table,
            "key": self.key,
            "version": self.version,
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SyncRow":
        return cls(str(data["table"]), str(data["key"]), int(data["version"]), data.get("payload"))


@dataclass(frozen=True)
class SyncEnvelope:
    """Dirty rows of one client, uploaded together."""

    sender: DeviceId
    rows: tuple[SyncRow, ...]
    sent_at: int

    def __post_init__(self) -> None:
        keys = [(r.table, r.key) for r in self.rows]
        if len(keys) != len(set(keys)):
            raise ValueError("Envelope carries the same row twice")

    def to_dict(self) -> dict[str, Any]:
        return {
            "sender": self.sender.value,
            "rows": [r.to_dict() for r in self.rows],
            "sent_at": self.sent_at,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SyncEnvelope":
        return cls(
            sender=parse_device_id(data["sender"]),
            rows=tuple(SyncRow.from_dict(r) for r in data.get("rows", [])),
            sent_at=int(data["sent_at"]),
        )


@dataclass(frozen=True, order=True)
class RowAck:
    table: str
    key: str
    version: int

    def to_list(self) -> list[Any]:
        return [self.table, self.key, self.version]

    @classmethod
    def from_list(cls, data: list[Any]) -> "RowAck":
        return cls(str(data[0]), str(data[1]), int(data[2]))


class PushKind(Enum):
    NOTE_DELIVERY = "note_delivery"
    BLOCK_NOTICE = "block_notice"
    UNBLOCK_NOTICE = "unblock_notice"


@dataclass(frozen=True)
class NoteDelivery:
    """
    A shared note with the sender's resolution of its triggers.

    Person triggers are the sender's contact ids, so the delivery carries the
    devices they map to and the full definitions of its locations.
    """

    note: Note
    sender: DeviceId
    person_devices: frozenset[DeviceId] = frozenset()
    locations: tuple[LocationDef, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "note": self.note.to_dict(),
            "sender": self.sender.value,
            "person_devices": sorted(d.value for d in self.person_devices),
            "locations": [loc.to_dict() for loc in self.locations],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "NoteDelivery":
        return cls(
            note=Note.from_dict(data["note"]),
            sender=parse_device_id(data["sender"]),
            person_devices=frozenset(parse_device_id(d) for d in data.get("person_devices", [])),
            locations=tuple(LocationDef.from_dict(loc) for loc in data.get("locations", [])),
        )


@dataclass(frozen=True)
class BlockNotice:
    blocker: DeviceId


@dataclass(frozen=True)
class UnblockNotice:
    blocker: DeviceId


PushBody = NoteDelivery | BlockNotice | UnblockNotice


@dataclass(frozen=True)
class PushMessage:
    """Server-initiated message; msg_id is unique for the broker's lifetime."""

    msg_id: int
    body: PushBody

    @property
    def kind(self) -> PushKind:
        if isinstance(self.body, NoteDelivery):
            return PushKind.NOTE_DELIVERY
        if isinstance(self.body, BlockNotice):
            return PushKind.BLOCK_NOTICE
        return PushKind.UNBLOCK_NOTICE

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"msg_id": self.msg_id, "kind": self.kind.value}
        if isinstance(self.body, NoteDelivery):
            data["delivery"] = self.body.to_dict()
        else:
            data["blocker"] = self.body.blocker.value
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PushMessage":
        kind = PushKind(data["kind"])
        body: PushBody
        if kind is PushKind.NOTE_DELIVERY:
            body = NoteDelivery.from_dict(data["delivery"])
        elif kind is PushKind.BLOCK_NOTICE:
            body = BlockNotice(parse_device_id(data["blocker"]))
        else:
            body = UnblockNotice(parse_device_id(data["blocker"]))
        return cls(int(data["msg_id"]), body)


@dataclass(frozen=True)
class ReceivedNote:
    """Row of received_notes: a delivered note that is live on this device."""

    delivery: NoteDelivery
    received_at: int
    msg_id: int

    @property
    def note_id(self) -> NoteId:
        return self.delivery.note.note_id

    def resolved(self) -> ResolvedNote:
        delivery = self.delivery
        return ResolvedNote(delivery.note, delivery.person_devices, delivery.locations)


@dataclass
class UploadResult:
    """Outcome of one connectivity round."""

    rows_sent: int = 0
    rows_acked: int = 0
    applied: list[PushMessage] = field(default_factory=list)
    duplicates: int = 0


class SyncClient:
    """
    Client half of the sync protocol for one device.

    Upload and push application run under the store's transaction lock, so they are
    serialized with every other store write.
    """

    REG_ID_KEY = "reg_id"

    def __init__(
        self, store: "ClientStore", device: DeviceId, session: "BrokerSession", clock: Clock
    ) -> None:
        self.store = store
        self.device = device
        self.session = session
        self.clock = clock

    @property
    def reg_id(self) -> str | None:
        return self.store.get_setting(self.REG_ID_KEY)

    def ensure_registered(self, force: bool = False) -> str:
        """Register with the broker once; the push handle is kept in the store."""
        reg_id = self.reg_id
        if reg_id is None or force:
            reg_id = self.session.register(self.device)
            self.store.set_setting(self.REG_ID_KEY, reg_id)
            logger.info(f"{self.device} registered as {reg_id}")
        return reg_id

    def _with_registration(self, call: Callable[[str], T]) -> T:
        reg_id = self.ensure_registered()
        try:
            return call(reg_id)
        except WireNackError as e:
            if e.error not in ("StaleRegistration", "UnknownSender"):
                raise
            logger.warning(f"{self.device}: {e.error}, registering again")
            return call(self.ensure_registered(force=True))

    def upload(self) -> tuple[int, int]:
        """
        Send all dirty rows in one envelope.

        Returns:
            (rows sent, rows acknowledged).

        Raises:
            LinkDown: Nothing is cleared.
        """
        if not self.session.link.is_up:
            raise LinkDown(f"{self.device}: link down")
        envelope = self.store.dirty_rows(self.device, self.clock.now())
        if not envelope.rows:
            return 0, 0
        acks = self._with_registration(lambda reg_id: self.session.ingest(envelope, reg_id))
        self.store.clear_dirty(acks)
        logger.info(f"{self.device}: uploaded {len(envelope.rows)} rows, {len(acks)} acked")
        return len(envelope.rows), len(acks)

    def apply_push(self, msg: PushMessage) -> bool:
        """
        Apply one push message.

        Returns:
            False if the msg_id was already applied (no effect).
        """
        with self.store.transaction():
            if not self.store.mark_seen(msg.msg_id):
                logger.debug(f"{self.device}: duplicate push {msg.msg_id}")
                return False
            body = msg.body
            if isinstance(body, NoteDelivery):
                self.store.put_received(ReceivedNote(body, self.clock.now(), msg.msg_id))
                logger.info(f"{self.device}: received note {body.note.note_id} from {body.sender}")
            elif isinstance(body, BlockNotice):
                self.store.add_blocked_by(body.blocker)
                logger.info(f"{self.device}: blocked by {body.blocker}")
            else:
                self.store.remove_blocked_by(body.blocker)
                logger.info(f"{self.device}: unblocked by {body.blocker}")
        return True

    def poll_push(self) -> tuple[list[PushMessage], int]:
        """
        Drain this device's broker queue, apply, then acknowledge.

        Returns:
            (applied messages, duplicate count).
        """
        if not self.session.link.is_up:
            raise LinkDown(f"{self.device}: link down")
        messages = self._with_registration(
            lambda reg_id: self.session.deliver(self.device, reg_id)
        )
        applied = [m for m in messages if self.apply_push(m)]
        if messages:
            self._with_registration(
                lambda reg_id: self.session.ack(self.device, reg_id, [m.msg_id for m in messages])
            )
        return applied, len(messages) - len(applied)

    def on_connectivity(self) -> UploadResult:
        """
        Upload dirty rows, then drain pushes.

        Raises:
            LinkDown: If the link is down (no state change) or drops midway.
        """
        sent, acked = self.upload()
        applied, duplicates = self.poll_push()
        return UploadResult(sent, acked, applied, duplicates)
