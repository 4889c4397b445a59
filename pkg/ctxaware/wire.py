"""
Broker wire protocol.

Frame format (integers big-endian except the CRC):

    [magic "CX"][version][control][length:4][payload: canonical JSON][CRC-CCITT: 2, LSB first]

Control byte format: [REQUEST|ACK|type5..0]
Types: REGISTER (0x01), INGEST (0x02), DELIVER (0x03), ACK (0x04), ERROR (0x3F)

A request sets REQUEST. A reply clears it and sets ACK on success; a NACK reply
carries {"error": <exception name>, "detail": <text>}. See docs/wire.md.
"""

import json
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any

from ctxaware import crc_ccitt
from ctxaware.model import CtxError

MAGIC = b"CX"
VERSION = 1

REQUEST_BIT = 0x80  # Bit 7: 1=request, 0=reply
ACK_BIT = 0x40  # Bit 6: ACK, set by the broker in a successful reply
TYPE_MASK = 0x3F  # Bits 5-0: message type

HEADER = struct.Struct(">2sBBI")
HEADER_SIZE = HEADER.size
CRC_SIZE = 2
MAX_PAYLOAD = 16 * 1024 * 1024


class MessageType(IntEnum):
    REGISTER = 0x01
    INGEST = 0x02
    DELIVER = 0x03
    ACK = 0x04
    ERROR = 0x3F


class WireError(CtxError):
    """Base exception for wire errors."""

    pass


class WireFormatError(WireError):
    """Bytes are not a well-formed canonical frame."""

    pass


class WireCrcError(WireError):
    """CRC check failed."""

    def __init__(self, message: str = "CRC check failed"):
        super().__init__(message)


class WireNackError(WireError):
    """NACK received from the broker."""

    def __init__(self, message_type: int, error: str, detail: str):
        self.message_type = message_type
        self.error = error
        self.detail = detail
        super().__init__(f"NACK for {_type_name(message_type)}: {error}: {detail}")


class WireTimeoutError(WireError):
    """No reply (or the reply was lost)."""

    def __init__(self, message_type: int):
        self.message_type = message_type
        super().__init__(f"Timeout waiting for reply to {_type_name(message_type)}")


class LinkDown(WireError):
    """Link to the broker is not available."""

    pass


def _type_name(message_type: int) -> str:
    try:
        return MessageType(message_type).name
    except ValueError:
        return f"0x{message_type:02X}"


def canonical_json(payload: dict[str, Any]) -> bytes:
    """UTF-8 JSON with sorted keys and no insignificant whitespace."""
    return json.dumps(
        payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    ).encode("utf-8")


@dataclass(frozen=True)
class Frame:
    """
    One wire frame.

    Attributes:
        control: Control byte [REQUEST|ACK|type5..0].
        payload: JSON object; field names are the self-describing tags.
    """

    control: int
    payload: dict[str, Any] = field(default_factory=dict)

    @property
    def is_request(self) -> bool:
        return bool(self.control & REQUEST_BIT)

    @property
    def is_ack(self) -> bool:
        return bool(self.control & ACK_BIT)

    @property
    def is_nack(self) -> bool:
        return not self.is_request and not self.is_ack

    @property
    def message_type(self) -> int:
        return self.control & TYPE_MASK

    def to_bytes(self) -> bytes:
        body = canonical_json(self.payload)
        if len(body) > MAX_PAYLOAD:
            raise WireFormatError(f"Payload of {len(body)} bytes exceeds {MAX_PAYLOAD}")
        return crc_ccitt.append_crc(HEADER.pack(MAGIC, VERSION, self.control, len(body)) + body)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Frame":
        """
        Parse and verify a frame.

        Raises:
            WireCrcError: CRC mismatch.
            WireFormatError: Bad magic, version, length or non-canonical payload.
        """
        if len(data) < HEADER_SIZE + CRC_SIZE:
            raise WireFormatError(f"Frame of {len(data)} bytes is too short")
        magic, version, control, length = HEADER.unpack_from(data)
        if magic != MAGIC:
            raise WireFormatError(f"Bad magic {magic!r}")
        if version != VERSION:
            raise WireFormatError(f"Unsupported version {version}")
        if len(data) != HEADER_SIZE + length + CRC_SIZE:
            raise WireFormatError(
                f"Length field {length} does not match frame size {len(data)}"
            )
        if not crc_ccitt.verify_crc(data):
            raise WireCrcError()
        body = data[HEADER_SIZE : HEADER_SIZE + length]
        try:
            payload = json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise WireFormatError(f"Payload is not JSON: {e}") from e
        if not isinstance(payload, dict):
            raise WireFormatError("Payload is not a JSON object")
        if canonical_json(payload) != body:
            raise WireFormatError("Payload is not in canonical form")
        return cls(control=control, payload=payload)


def remaining_length(header: bytes) -> int:
    """Bytes still to read after a frame header (payload plus CRC)."""
    magic, version, _, length = HEADER.unpack(header)
    if magic != MAGIC or version != VERSION:
        raise WireFormatError(f"Bad frame header {header.hex()}")
    if length > MAX_PAYLOAD:
        raise WireFormatError(f"Payload length {length} exceeds {MAX_PAYLOAD}")
    return length + CRC_SIZE


def make_request(message_type: MessageType | int, payload: dict[str, Any] | None = None) -> Frame:
    return Frame(REQUEST_BIT | (int(message_type) & TYPE_MASK), payload or {})


def make_reply(
    message_type: MessageType | int, payload: dict[str, Any] | None = None, ack: bool = True
) -> Frame:
    control = int(message_type) & TYPE_MASK
    if ack:
        control |= ACK_BIT
    return Frame(control, payload or {})


def make_nack(message_type: MessageType | int, error: str, detail: str) -> Frame:
    return make_reply(message_type, {"error": error, "detail": detail}, ack=False)


def validate_reply(request: Frame, reply: Frame) -> None:
    """
    Validate that reply matches request.

    Raises:
        WireError: If reply is invalid.
        WireNackError: If reply is a NACK.
    """
    if reply.is_request:
        raise WireError("Received request frame when expecting reply")

    if reply.is_nack:
        raise WireNackError(
            reply.message_type,
            str(reply.payload.get("error", "Unknown")),
            str(reply.payload.get("detail", "")),
        )

    if reply.message_type != request.message_type:
        raise WireError(
            f"Reply type {_type_name(reply.message_type)} does not match "
            f"request type {_type_name(request.message_type)}"
        )
