"""
CRC-16/CCITT for wire frames.

- Reflected polynomial: 0x8408 (0x1021 processed LSB-first)
- Initial value: 0xFFFF, no final xor
- Transmitted LSB first
- Check value ("123456789"): 0x6F91
"""

POLY_REFLECTED = 0x8408
INITIAL = 0xFFFF


def _make_table() -> tuple[int, ...]:
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = (crc >> 1) ^ POLY_REFLECTED if crc & 0x0001 else crc >> 1
        table.append(crc)
    return tuple(table)


CRC_TABLE = _make_table()


def crc_ccitt(data: bytes | bytearray, initial: int = INITIAL) -> int:
    """
    Calculate CRC-CCITT checksum with LSB-first bit order.

    Args:
        data: Input data bytes.
        initial: Initial CRC value (default 0xFFFF).

    Returns:
        16-bit CRC value.
    """
    crc = initial
    for byte in data:
        crc = (crc >> 8) ^ CRC_TABLE[(crc ^ byte) & 0xFF]
    return crc


def append_crc(data: bytes | bytearray) -> bytes:
    """Append the CRC to data (LSB, then MSB)."""
    crc = crc_ccitt(data)
    return bytes(data) + bytes([crc & 0xFF, (crc >> 8) & 0xFF])


def verify_crc(data: bytes | bytearray) -> bool:
    """
    Verify the trailing CRC.

    Args:
        data: Data with CRC appended (last 2 bytes are CRC LSB, MSB).

    Returns:
        True if CRC is valid, False otherwise.
    """
    if len(data) < 2:
        return False
    received_crc = data[-2] | (data[-1] << 8)
    return received_crc == crc_ccitt(data[:-2])
