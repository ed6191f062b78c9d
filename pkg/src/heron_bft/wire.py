"""Length-prefixed canonical binary primitives shared by the codec, key and trace files."""

from __future__ import annotations

import struct

from heron_bft.errors import ParseError

_U8 = struct.Struct(">B")
_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")


class Writer:
    """Append-only big-endian encoder."""

    def __init__(self) -> None:
        self._parts: list[bytes] = []

    def u8(self, value: int) -> Writer:
        self._parts.append(_U8.pack(value))
        return self

    def u32(self, value: int) -> Writer:
        self._parts.append(_U32.pack(value))
        return self

    def u64(self, value: int) -> Writer:
        self._parts.append(_U64.pack(value))
        return self

    def blob(self, data: bytes) -> Writer:
        self._parts.append(_U32.pack(len(data)))
        self._parts.append(bytes(data))
        return self

    def bigint(self, value: int) -> Writer:
        """Non-negative integer as a length-prefixed minimal big-endian blob."""
        if value < 0:
            raise ValueError("bigint must be non-negative")
        return self.blob(value.to_bytes((value.bit_length() + 7) // 8, "big"))

    def raw(self, data: bytes) -> Writer:
        self._parts.append(bytes(data))
        return self

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    """Cursor over encoded bytes; every short read raises ParseError."""

    def __init__(self, data: bytes) -> None:
        self._data = memoryview(data)
        self._pos = 0

    def _take(self, size: int) -> memoryview:
        end = self._pos + size
        if end > len(self._data):
            raise ParseError(f"truncated input: need {size} bytes at offset {self._pos}")
        chunk = self._data[self._pos:end]
        self._pos = end
        return chunk

    def u8(self) -> int:
        return _U8.unpack(self._take(1))[0]

    def u32(self) -> int:
        return _U32.unpack(self._take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self._take(8))[0]

    def blob(self) -> bytes:
        return bytes(self._take(self.u32()))

    def bigint(self) -> int:
        data = self.blob()
        if data[:1] == b"\x00":
            raise ParseError("non-canonical integer encoding")
        return int.from_bytes(data, "big")

    def raw(self, size: int) -> bytes:
        return bytes(self._take(size))

    @property
    def remaining(self) -> int:
        return len(self._data) - self._pos

    def expect_end(self) -> None:
        if self.remaining:
            raise ParseError(f"{self.remaining} trailing bytes")
