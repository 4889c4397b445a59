"""
Client links to the broker and the typed request/reply session on top of them.

SimLink connects in-process to a broker and can be switched down to model a network
partition. SocketLink talks to the standalone broker over TCP. BrokerSession frames
requests, checks CRCs and retries on CRC errors and lost replies.
"""

import logging
import socket
from typing import Protocol

from ctxaware import wire
from ctxaware.model import DeviceId
from ctxaware.sync import PushMessage, RowAck, SyncEnvelope
from ctxaware.wire import LinkDown, MessageType, WireCrcError, WireNackError, WireTimeoutError

logger = logging.getLogger(__name__)


class Link(Protocol):
    """Request/reply byte transport."""

    @property
    def is_up(self) -> bool: ...

    def transact(self, request: bytes) -> bytes: ...

    def close(self) -> None: ...


class FrameHandler(Protocol):
    def handle_frame(self, request: bytes) -> bytes: ...


class SimLink:
    """
    In-process link with fault hooks.

    Attributes:
        up: Link state; transact raises LinkDown while False.
        drop_replies: Number of upcoming replies to lose after the broker handled the request.
        corrupt_replies: Number of upcoming replies to deliver with a flipped byte.
    """

    def __init__(self, handler: FrameHandler, up: bool = True) -> None:
        self.handler = handler
        self.up = up
        self.drop_replies = 0
        self.corrupt_replies = 0

    @property
    def is_up(self) -> bool:
        return self.up

    def set_up(self, up: bool) -> None:
        self.up = up

    def transact(self, request: bytes) -> bytes:
        if not self.up:
            raise LinkDown("Simulated link is down")
        reply = self.handler.handle_frame(request)
        if self.drop_replies:
            self.drop_replies -= 1
            raise WireTimeoutError(request[3] & wire.TYPE_MASK)
        if self.corrupt_replies:
            self.corrupt_replies -= 1
            damaged = bytearray(reply)
            damaged[-3] ^= 0xFF
            return bytes(damaged)
        return reply

    def close(self) -> None:
        self.up = False


def parse_address(address: str) -> tuple[str, int]:
    """`host:port` -> (host, port)."""
    host, sep, port = address.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"Address {address!r} is not host:port")
    return host or "127.0.0.1", int(port)


def recv_exact(sock: socket.socket, length: int) -> bytes:
    """Read exactly `length` bytes; fewer means the peer closed."""
    data = bytearray()
    while len(data) < length:
        chunk = sock.recv(length - len(data))
        if not chunk:
            break
        data += chunk
    return bytes(data)


def read_frame(sock: socket.socket) -> bytes | None:
    """Read one raw frame; None on clean end of stream."""
    header = recv_exact(sock, wire.HEADER_SIZE)
    if not header:
        return None
    if len(header) < wire.HEADER_SIZE:
        raise wire.WireFormatError("Stream ended inside a frame header")
    rest = recv_exact(sock, wire.remaining_length(header))
    if len(rest) < wire.remaining_length(header):
        raise wire.WireFormatError("Stream ended inside a frame")
    return header + rest


class SocketLink:
    """TCP link to a standalone broker; connects lazily and reconnects after errors."""

    def __init__(self, host: str, port: int, timeout_ms: int = 2000) -> None:
        self.host = host
        self.port = port
        self.timeout_s = timeout_ms / 1000.0
        self._sock: socket.socket | None = None
        self._closed = False

    @classmethod
    def from_address(cls, address: str, timeout_ms: int = 2000) -> "SocketLink":
        host, port = parse_address(address)
        return cls(host, port, timeout_ms)

    @property
    def is_up(self) -> bool:
        if self._closed:
            return False
        try:
            self._connect()
        except LinkDown:
            return False
        return True

    def _connect(self) -> socket.socket:
        if self._sock is None:
            try:
                self._sock = socket.create_connection((self.host, self.port), self.timeout_s)
            except OSError as e:
                raise LinkDown(f"Cannot reach broker at {self.host}:{self.port}: {e}") from e
            logger.info(f"Connected to broker {self.host}:{self.port}")
        return self._sock

    def _drop(self) -> None:
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def transact(self, request: bytes) -> bytes:
        if self._closed:
            raise LinkDown("Link closed")
        sock = self._connect()
        try:
            sock.sendall(request)
            reply = read_frame(sock)
        except socket.timeout as e:
            self._drop()
            raise WireTimeoutError(request[3] & wire.TYPE_MASK) from e
        except OSError as e:
            self._drop()
            raise LinkDown(f"Broker connection lost: {e}") from e
        if reply is None:
            self._drop()
            raise LinkDown("Broker closed the connection")
        return reply

    def close(self) -> None:
        self._closed = True
        self._drop()


class BrokerSession:
    """
    Typed broker calls over a link.

    Handles framing, CRC, reply validation, retries and statistics.
    """

    def __init__(self, link: Link, retries: int = 2) -> None:
        """
        Initialize session.

        Args:
            link: Byte transport to the broker.
            retries: Number of retries on CRC errors and lost replies.
        """
        self.link = link
        self.retries = retries
        self.stats = {
            "frames_tx": 0,
            "frames_rx": 0,
            "crc_errors": 0,
            "timeouts": 0,
            "nacks": 0,
        }

    def close(self) -> None:
        self.link.close()

    def _transact(self, request: wire.Frame) -> wire.Frame:
        """
        Send a request and return the validated reply.

        Raises:
            LinkDown: Link down (never retried).
            WireNackError: Broker refused the request.
            WireCrcError, WireTimeoutError: After all retries failed.
        """
        raw = request.to_bytes()
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                self.stats["frames_tx"] += 1
                logger.debug(f"TX {MessageType(request.message_type).name} ({len(raw)} bytes)")
                reply = wire.Frame.from_bytes(self.link.transact(raw))
                self.stats["frames_rx"] += 1
                wire.validate_reply(request, reply)
                return reply
            except WireCrcError as e:
                self.stats["crc_errors"] += 1
                last_error = e
                logger.warning(f"CRC error (attempt {attempt + 1}/{self.retries + 1})")
            except WireTimeoutError as e:
                self.stats["timeouts"] += 1
                last_error = e
                logger.warning(f"{e} (attempt {attempt + 1}/{self.retries + 1})")
            except WireNackError:
                self.stats["nacks"] += 1
                raise
        assert last_error is not None
        raise last_error

    def register(self, device: DeviceId) -> str:
        reply = self._transact(wire.make_request(MessageType.REGISTER, {"device": device.value}))
        return str(reply.payload["reg_id"])

    def ingest(self, envelope: SyncEnvelope, reg_id: str) -> list[RowAck]:
        reply = self._transact(
            wire.make_request(
                MessageType.INGEST, {"reg_id": reg_id, "envelope": envelope.to_dict()}
            )
        )
        return [RowAck.from_list(a) for a in reply.payload.get("acks", [])]

    def deliver(self, device: DeviceId, reg_id: str) -> list[PushMessage]:
        reply = self._transact(
            wire.make_request(MessageType.DELIVER, {"device": device.value, "reg_id": reg_id})
        )
        return [PushMessage.from_dict(m) for m in reply.payload.get("messages", [])]

    def ack(self, device: DeviceId, reg_id: str, msg_ids: list[int]) -> int:
        reply = self._transact(
            wire.make_request(
                MessageType.ACK,
                {"device": device.value, "reg_id": reg_id, "msg_ids": sorted(msg_ids)},
            )
        )
        return int(reply.payload.get("removed", 0))
