"""Canonical length-prefixed binary encoding.

Integers are big-endian. Variable-length fields carry a 4-byte length prefix,
so every record has exactly one encoding.
"""
from typing import List

from audita.core.exceptions import DecodeException

LENGTH_PREFIX = 4


def int_to_bytes(value: int, width: int = 0) -> bytes:
    if value < 0:
        raise ValueError("negative integers are not encodable")
    size = max(width, (value.bit_length() + 7) // 8)
    return value.to_bytes(size, "big")


class Encoder:
    def __init__(self) -> None:
        self._parts: List[bytes] = []

    def uint(self, value: int, width: int = 8) -> "Encoder":
        self._parts.append(value.to_bytes(width, "big"))
        return self

    def raw(self, data: bytes) -> "Encoder":
        self._parts.append(data)
        return self

    def field(self, data: bytes) -> "Encoder":
        self._parts.append(len(data).to_bytes(LENGTH_PREFIX, "big"))
        self._parts.append(data)
        return self

    def bigint(self, value: int, width: int = 0) -> "Encoder":
        return self.field(int_to_bytes(value, width))

    def flag(self, value: bool) -> "Encoder":
        self._parts.append(b"\x01" if value else b"\x00")
        return self

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Decoder:
    def __init__(self, data: bytes) -> None:
        self._data = data
        self._offset = 0

    def _take(self, size: int) -> bytes:
        end = self._offset + size
        if size < 0 or end > len(self._data):
            raise DecodeException(f"truncated input at offset {self._offset}")
        chunk = self._data[self._offset:end]
        self._offset = end
        return chunk

    def uint(self, width: int = 8) -> int:
        return int.from_bytes(self._take(width), "big")

    def raw(self, size: int) -> bytes:
        return self._take(size)

    def field(self) -> bytes:
        size = int.from_bytes(self._take(LENGTH_PREFIX), "big")
        return self._take(size)

    def bigint(self) -> int:
        return int.from_bytes(self.field(), "big")

    def flag(self) -> bool:
        value = self._take(1)
        if value not in (b"\x00", b"\x01"):
            raise DecodeException("invalid boolean flag")
        return value == b"\x01"

    def finish(self) -> None:
        if self._offset != len(self._data):
            raise DecodeException(f"{len(self._data) - self._offset} trailing bytes")


def from_hex(text: str) -> bytes:
    try:
        return bytes.fromhex(text.strip())
    except ValueError as e:
        raise DecodeException(f"invalid hex: {e}") from e
