"""
Unit tests for broker frame encoding and reply validation.
"""

import pytest

from ctxaware import crc_ccitt, wire
from ctxaware.wire import (
    ACK_BIT,
    HEADER_SIZE,
    REQUEST_BIT,
    Frame,
    MessageType,
    WireCrcError,
    WireError,
    WireFormatError,
    WireNackError,
    canonical_json,
    make_nack,
    make_reply,
    make_request,
    validate_reply,
)


def raw_frame(body: bytes, control: int = REQUEST_BIT | MessageType.REGISTER) -> bytes:
    return crc_ccitt.append_crc(wire.HEADER.pack(b"CX", 1, control, len(body)) + body)


class TestCanonicalJson:
    """Test the canonical payload encoding."""

    def test_sorted_and_compact(self):
        """Keys are sorted and separators carry no spaces."""
        assert canonical_json({"b": 1, "a": [1, 2]}) == b'{"a":[1,2],"b":1}'

    def test_utf8_not_escaped(self):
        """Non-ASCII text is encoded as UTF-8."""
        assert canonical_json({"n": "Jõao"}) == '{"n":"Jõao"}'.encode()

    def test_nan_rejected(self):
        """NaN has no canonical form."""
        with pytest.raises(ValueError):
            canonical_json({"x": float("nan")})


class TestFrame:
    """Test frame layout and parsing."""

    def test_layout(self):
        """Header, payload and CRC appear in order."""
        data = make_request(MessageType.REGISTER, {"device": "02:00:00:00:00:01"}).to_bytes()
        body = b'{"device":"02:00:00:00:00:01"}'
        assert data[:2] == b"CX"
        assert data[2] == 1
        assert data[3] == REQUEST_BIT | MessageType.REGISTER
        assert int.from_bytes(data[4:8], "big") == len(body)
        assert data[HEADER_SIZE:-2] == body
        assert crc_ccitt.verify_crc(data)

    def test_parse(self):
        """An encoded frame parses back."""
        frame = make_request(MessageType.INGEST, {"reg_id": "reg-1", "n": [1, 2]})
        parsed = Frame.from_bytes(frame.to_bytes())
        assert parsed == frame
        assert parsed.is_request
        assert parsed.message_type == MessageType.INGEST

    def test_crc_error(self):
        """A flipped payload byte fails the CRC."""
        data = bytearray(make_request(MessageType.REGISTER, {"device": "x"}).to_bytes())
        data[HEADER_SIZE + 2] ^= 0x01
        with pytest.raises(WireCrcError):
            Frame.from_bytes(bytes(data))

    def test_too_short(self):
        """Fewer bytes than header plus CRC is malformed."""
        with pytest.raises(WireFormatError, match="too short"):
            Frame.from_bytes(b"CX\x01")

    def test_bad_magic(self):
        """Magic must be CX."""
        data = bytearray(raw_frame(b"{}"))
        data[0:2] = b"ZZ"
        with pytest.raises(WireFormatError, match="magic"):
            Frame.from_bytes(bytes(data))

    def test_bad_version(self):
        """Only version 1 is understood."""
        data = crc_ccitt.append_crc(wire.HEADER.pack(b"CX", 2, 0x81, 2) + b"{}")
        with pytest.raises(WireFormatError, match="version"):
            Frame.from_bytes(data)

    def test_length_mismatch(self):
        """The length field must cover the payload exactly."""
        data = crc_ccitt.append_crc(wire.HEADER.pack(b"CX", 1, 0x81, 5) + b"{}")
        with pytest.raises(WireFormatError, match="Length field"):
            Frame.from_bytes(data)

    def test_non_canonical_payload(self):
        """Whitespace or unsorted keys are rejected."""
        with pytest.raises(WireFormatError, match="canonical"):
            Frame.from_bytes(raw_frame(b'{"b":1, "a":2}'))
        with pytest.raises(WireFormatError, match="canonical"):
            Frame.from_bytes(raw_frame(b'{"b":1,"a":2}'))

    def test_payload_must_be_object(self):
        """A JSON array is not a payload."""
        with pytest.raises(WireFormatError, match="object"):
            Frame.from_bytes(raw_frame(b"[1,2]"))

    def test_payload_must_be_json(self):
        """Garbage bytes are not JSON."""
        with pytest.raises(WireFormatError, match="not JSON"):
            Frame.from_bytes(raw_frame(b"\xff\xfe"))

    def test_remaining_length(self):
        """Header tells how many bytes follow."""
        data = make_request(MessageType.ACK, {"a": 1}).to_bytes()
        assert wire.remaining_length(data[:HEADER_SIZE]) == len(data) - HEADER_SIZE


class TestControlByte:
    """Test request, ACK and NACK encoding."""

    def test_request(self):
        """Requests set bit 7 only."""
        assert make_request(MessageType.DELIVER).control == 0x83

    def test_ack_reply(self):
        """Successful replies set the ACK bit."""
        reply = make_reply(MessageType.DELIVER)
        assert reply.control == ACK_BIT | 0x03
        assert reply.is_ack and not reply.is_nack

    def test_nack_reply(self):
        """NACK replies clear both flag bits."""
        nack = make_nack(MessageType.INGEST, "StaleRegistration", "gone")
        assert nack.control == 0x02
        assert nack.is_nack
        assert nack.payload == {"error": "StaleRegistration", "detail": "gone"}


class TestValidateReply:
    """Test reply validation."""

    def test_matching_ack(self):
        """ACK of the same type passes."""
        validate_reply(make_request(MessageType.ACK), make_reply(MessageType.ACK))

    def test_nack_raises(self):
        """A NACK raises with the broker's error name."""
        request = make_request(MessageType.INGEST)
        with pytest.raises(WireNackError) as exc_info:
            validate_reply(request, make_nack(MessageType.INGEST, "UnknownSender", "who"))
        assert exc_info.value.error == "UnknownSender"
        assert "NACK for INGEST" in str(exc_info.value)

    def test_type_mismatch(self):
        """Reply for another request type is an error."""
        with pytest.raises(WireError, match="does not match"):
            validate_reply(make_request(MessageType.INGEST), make_reply(MessageType.DELIVER))

    def test_request_as_reply(self):
        """A request frame is not a reply."""
        with pytest.raises(WireError, match="request frame"):
            validate_reply(make_request(MessageType.ACK), make_request(MessageType.ACK))
