"""
Unit tests for CRC-CCITT implementation.
"""

from ctxaware import crc_ccitt


class TestCrcCcitt:
    """Test CRC-CCITT calculation and verification."""

    def test_crc_empty(self):
        """Test CRC of empty data."""
        assert crc_ccitt.crc_ccitt(b"") == 0xFFFF

    def test_crc_check_value(self):
        """The standard check string gives 0x6F91."""
        assert crc_ccitt.crc_ccitt(b"123456789") == 0x6F91

    def test_crc_matches_bitwise(self):
        """Table-driven CRC equals the bit-by-bit definition."""

        def bitwise(data):
            crc = 0xFFFF
            for byte in data:
                crc ^= byte
                for _ in range(8):
                    crc = (crc >> 1) ^ 0x8408 if crc & 1 else crc >> 1
            return crc

        for data in (b"\x00", b"Hello", bytes(range(256)), b"CX\x01\x81"):
            assert crc_ccitt.crc_ccitt(data) == bitwise(data)

    def test_append_crc_lsb_first(self):
        """CRC is appended LSB first."""
        with_crc = crc_ccitt.append_crc(b"123456789")
        assert with_crc[-2:] == b"\x91\x6f"
        assert with_crc[:-2] == b"123456789"

    def test_verify_crc_valid(self):
        """Test verification of valid CRC."""
        assert crc_ccitt.verify_crc(crc_ccitt.append_crc(b"\x01\x02\x03\x04")) is True

    def test_verify_crc_invalid(self):
        """Test verification of invalid CRC."""
        corrupted = bytearray(crc_ccitt.append_crc(b"\x01\x02\x03\x04"))
        corrupted[-1] ^= 0xFF
        assert crc_ccitt.verify_crc(bytes(corrupted)) is False

    def test_verify_crc_too_short(self):
        """Test verification with insufficient data."""
        assert crc_ccitt.verify_crc(b"\x01") is False
