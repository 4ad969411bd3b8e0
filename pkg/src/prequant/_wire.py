"""Minimal protocol-buffers wire codec (varint, fixed32/64, length-delimited).

Only what ONNX ModelProto needs. Writers return ``bytes``; the reader walks a
buffer span and reports absolute byte offsets in errors.
"""
from __future__ import annotations

import struct

from .errors import ParseError

VARINT, FIXED64, LEN, FIXED32 = 0, 1, 2, 5

_MASK64 = (1 << 64) - 1


def varint(n: int) -> bytes:
    n &= _MASK64  # negative int64 -> ten-byte two's complement
    out = bytearray()
    while True:
        b = n & 0x7F
        n >>= 7
        if n:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def tag(field: int, wire_type: int) -> bytes:
    return varint((field << 3) | wire_type)


def f_varint(field: int, n: int) -> bytes:
    return tag(field, VARINT) + varint(n)


def f_bytes(field: int, payload: bytes) -> bytes:
    return tag(field, LEN) + varint(len(payload)) + payload


def f_str(field: int, s: str) -> bytes:
    return f_bytes(field, s.encode("utf-8"))


def f_float(field: int, x: float) -> bytes:
    return tag(field, FIXED32) + struct.pack("<f", x)


def to_int64(n: int) -> int:
    return n - (1 << 64) if n >= 1 << 63 else n


class Reader:
    """Iterate ``(field, wire_type, value, offset)`` over ``buf[start:end]``.

    ``value`` is an int for varints, raw ``bytes`` for fixed32/64 and a
    ``(start, end)`` span for length-delimited fields.
    """

    def __init__(self, buf: bytes, start: int = 0, end: int | None = None):
        self.buf = buf
        self.start = start
        self.end = len(buf) if end is None else end

    def _varint(self, pos: int) -> tuple[int, int]:
        result, shift, begin = 0, 0, pos
        while True:
            if pos >= self.end:
                raise ParseError("truncated varint", begin)
            b = self.buf[pos]
            pos += 1
            result |= (b & 0x7F) << shift
            if not b & 0x80:
                return result, pos
            shift += 7
            if shift >= 70:
                raise ParseError("varint too long", begin)

    def __iter__(self):
        pos = self.start
        while pos < self.end:
            offset = pos
            key, pos = self._varint(pos)
            field, wt = key >> 3, key & 7
            if field == 0:
                raise ParseError("invalid field number 0", offset)
            if wt == VARINT:
                value, pos = self._varint(pos)
            elif wt == FIXED64:
                if pos + 8 > self.end:
                    raise ParseError("truncated fixed64", offset)
                value, pos = self.buf[pos:pos + 8], pos + 8
            elif wt == FIXED32:
                if pos + 4 > self.end:
                    raise ParseError("truncated fixed32", offset)
                value, pos = self.buf[pos:pos + 4], pos + 4
            elif wt == LEN:
                n, pos = self._varint(pos)
                if pos + n > self.end:
                    raise ParseError("truncated length-delimited field", offset)
                value, pos = (pos, pos + n), pos + n
            else:
                raise ParseError(f"unsupported wire type {wt}", offset)
            yield field, wt, value, offset

    def sub(self, span: tuple[int, int]) -> "Reader":
        return Reader(self.buf, span[0], span[1])

    def text(self, span: tuple[int, int], offset: int) -> str:
        try:
            return bytes(self.buf[span[0]:span[1]]).decode("utf-8")
        except UnicodeDecodeError:
            raise ParseError("invalid UTF-8 string", offset) from None

    def raw(self, span: tuple[int, int]) -> bytes:
        return bytes(self.buf[span[0]:span[1]])

    def packed_varints(self, span: tuple[int, int]) -> list[int]:
        r = Reader(self.buf, span[0], span[1])
        out, pos = [], span[0]
        while pos < span[1]:
            v, pos = r._varint(pos)
            out.append(v)
        return out
