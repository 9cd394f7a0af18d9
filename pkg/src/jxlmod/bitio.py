"""LSB-first bit reading and writing plus the basic and derived field types.

Every ``read_*`` function has a ``write_*`` dual on :class:`BitWriter` so the
reference encoders can emit anything the decoders accept.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Type, Union

from .errors import EncoderError, IllFormed


class BitReader:
    """Cursor over an immutable byte buffer, least-significant bit first."""

    __slots__ = ("data", "bit_pos", "nbits")

    def __init__(self, data: bytes, bit_pos: int = 0):
        self.data = bytes(data)
        self.bit_pos = bit_pos
        self.nbits = len(self.data) * 8

    @property
    def byte_pos(self) -> int:
        return self.bit_pos >> 3

    def remaining_bits(self) -> int:
        return self.nbits - self.bit_pos

    def error(self, message: str) -> IllFormed:
        return IllFormed(message, self.bit_pos >> 3)

    def u(self, n: int) -> int:
        if n == 0:
            return 0
        pos = self.bit_pos
        end = pos + n
        if end > self.nbits:
            raise IllFormed("read past the end of the codestream", self.nbits >> 3)
        chunk = int.from_bytes(self.data[pos >> 3:(end + 7) >> 3], "little")
        self.bit_pos = end
        return (chunk >> (pos & 7)) & ((1 << n) - 1)

    def skip(self, n: int) -> None:
        if n < 0 or self.bit_pos + n > self.nbits:
            raise IllFormed("skip past the end of the codestream", self.nbits >> 3)
        self.bit_pos += n

    def pu(self) -> int:
        rem = self.bit_pos & 7
        return self.u(8 - rem) if rem else 0

    def pu0(self) -> None:
        if self.pu() != 0:
            raise self.error("nonzero padding bits")

    def seek_byte(self, index: int) -> None:
        if index < 0 or index * 8 > self.nbits:
            raise IllFormed("section offset outside the codestream", index)
        self.bit_pos = index * 8

    def read_bytes(self, n: int) -> bytes:
        """Read ``n`` whole bytes; the cursor must be byte-aligned."""
        if self.bit_pos & 7:
            raise self.error("unaligned byte read")
        start = self.bit_pos >> 3
        if start + n > len(self.data):
            raise IllFormed("read past the end of the codestream", len(self.data))
        self.bit_pos += 8 * n
        return self.data[start:start + n]


class BitWriter:
    """Growable LSB-first bit sink; the dual of :class:`BitReader`."""

    def __init__(self):
        self._buf = bytearray()
        self._cur = 0
        self._nbits = 0

    @property
    def bit_pos(self) -> int:
        return len(self._buf) * 8 + self._nbits

    def write(self, n: int, value: int) -> None:
        if n == 0:
            return
        if value < 0 or value >> n:
            raise EncoderError(f"value {value} does not fit in {n} bits")
        cur = self._cur | (value << self._nbits)
        nbits = self._nbits + n
        buf = self._buf
        while nbits >= 8:
            buf.append(cur & 255)
            cur >>= 8
            nbits -= 8
        self._cur = cur
        self._nbits = nbits

    def pu0(self) -> None:
        if self._nbits:
            self._buf.append(self._cur)
            self._cur = 0
            self._nbits = 0

    def write_bytes(self, data: bytes) -> None:
        self.pu0()
        self._buf += data

    def getvalue(self) -> bytes:
        if self._nbits:
            return bytes(self._buf) + bytes([self._cur])
        return bytes(self._buf)

    # field duals

    def write_bool(self, v: bool) -> None:
        self.write(1, 1 if v else 0)

    def write_u32(self, d: "U32", value: int) -> None:
        write_u32(self, d, value)

    def write_u64(self, value: int) -> None:
        write_u64(self, value)

    def write_varint(self, value: int) -> None:
        write_varint(self, value)


# U32 distributions

@dataclass(frozen=True)
class Val:
    u: int


@dataclass(frozen=True)
class Bits:
    n: int


@dataclass(frozen=True)
class BitsOffset:
    n: int
    offset: int


Dist = Union[Val, Bits, BitsOffset]
U32 = tuple  # four Dist entries


def read_u32(r: BitReader, d: U32) -> int:
    dist = d[r.u(2)]
    if isinstance(dist, Val):
        return dist.u
    if isinstance(dist, Bits):
        return r.u(dist.n)
    return (dist.offset + r.u(dist.n)) & 0xFFFFFFFF


def write_u32(w: BitWriter, d: U32, value: int) -> None:
    for sel, dist in enumerate(d):
        if isinstance(dist, Val):
            if dist.u == value:
                w.write(2, sel)
                return
        elif isinstance(dist, Bits):
            if 0 <= value < (1 << dist.n):
                w.write(2, sel)
                w.write(dist.n, value)
                return
        elif dist.offset <= value < dist.offset + (1 << dist.n):
            w.write(2, sel)
            w.write(dist.n, value - dist.offset)
            return
    raise EncoderError(f"value {value} not representable by {d}")


def read_u64(r: BitReader) -> int:
    sel = r.u(2)
    if sel == 0:
        return 0
    if sel == 1:
        return 1 + r.u(4)
    if sel == 2:
        return 17 + r.u(8)
    value = r.u(12)
    shift = 12
    while r.u(1):
        if shift == 60:
            value += r.u(4) << shift
            break
        value += r.u(8) << shift
        shift += 8
    return value


def write_u64(w: BitWriter, value: int) -> None:
    if value < 0 or value >> 64:
        raise EncoderError("U64 out of range")
    if value == 0:
        w.write(2, 0)
    elif value <= 16:
        w.write(2, 1)
        w.write(4, value - 1)
    elif value <= 17 + 255:
        w.write(2, 2)
        w.write(8, value - 17)
    else:
        w.write(2, 3)
        w.write(12, value & 0xFFF)
        rest = value >> 12
        shift = 12
        while rest:
            w.write(1, 1)
            if shift == 60:
                w.write(4, rest)
                return
            w.write(8, rest & 0xFF)
            rest >>= 8
            shift += 8
        w.write(1, 0)


def read_varint(r: BitReader) -> int:
    value = 0
    shift = 0
    while True:
        b = r.u(8)
        value += (b & 127) << shift
        if b <= 127:
            return value
        shift += 7
        if shift >= 63:
            raise r.error("Varint longer than 63 bits")


def write_varint(w: BitWriter, value: int) -> None:
    if value < 0 or value >> 63:
        raise EncoderError("Varint out of range")
    while value > 127:
        w.write(8, 0x80 | (value & 127))
        value >>= 7
    w.write(8, value)


def varint_bytes(value: int) -> bytes:
    w = BitWriter()
    write_varint(w, value)
    return w.getvalue()


def read_sl(r: BitReader, n: int) -> int:
    value = 0
    for i in range(n):
        if i < n - 1 and not r.u(1):
            break
        value |= r.u(1) << i
    return value


def write_sl(w: BitWriter, n: int, value: int) -> None:
    if value < 0 or value >> n:
        raise EncoderError("SL out of range")
    for i in range(n):
        if i < n - 1:
            if value >> i == 0:
                w.write(1, 0)
                return
            w.write(1, 1)
        w.write(1, (value >> i) & 1)


def read_gl(r: BitReader, g: int, n: int) -> int:
    value = 0
    for i in range(n):
        if not r.u(1):
            break
        value |= r.u(g) << (g * i)
    return value


def write_gl(w: BitWriter, g: int, n: int, value: int) -> None:
    if value < 0 or value >> (g * n):
        raise EncoderError("GL out of range")
    for i in range(n):
        if value >> (g * i) == 0:
            w.write(1, 0)
            return
        w.write(1, 1)
        w.write(g, (value >> (g * i)) & ((1 << g) - 1))


def read_u8(r: BitReader) -> int:
    if r.u(1) == 0:
        return 0
    n = r.u(3)
    return r.u(n) + (1 << n)


def write_u8(w: BitWriter, value: int) -> None:
    if not 0 <= value < 256:
        raise EncoderError("U8 out of range")
    if value == 0:
        w.write(1, 0)
        return
    n = value.bit_length() - 1
    w.write(1, 1)
    w.write(3, n)
    w.write(n, value - (1 << n))


def f16_from_bits(bits16: int) -> float:
    sign = bits16 >> 15
    biased_exp = (bits16 >> 10) & 0x1F
    mantissa = bits16 & 0x3FF
    if biased_exp == 31:
        raise IllFormed("F16 exponent 31 (NaN or infinity)")
    if biased_exp == 0:
        value = mantissa / (1 << 24)
        return -value if sign else value
    bits32 = (sign << 31) | ((biased_exp + 112) << 23) | (mantissa << 13)
    return struct.unpack("<f", struct.pack("<I", bits32))[0]


def read_f16(r: BitReader) -> float:
    pos = r.bit_pos
    try:
        return f16_from_bits(r.u(16))
    except IllFormed as exc:
        raise IllFormed(str(exc.args[0]), pos >> 3) from None


def write_f16(w: BitWriter, value: float) -> None:
    try:
        bits16 = struct.unpack("<H", struct.pack("<e", value))[0]
    except OverflowError as exc:
        raise EncoderError(f"{value} not representable as F16") from exc
    if (bits16 >> 10) & 0x1F == 31:
        raise EncoderError("F16 cannot carry NaN or infinity")
    w.write(16, bits16)


def read_bool(r: BitReader) -> bool:
    return r.u(1) == 1


def read_s32(r: BitReader, d: U32) -> int:
    v = read_u32(r, d)
    if v & 1 == 0:
        return v >> 1
    if v == 0xFFFFFFFF:
        return -(1 << 31)
    return -((v >> 1) + 1)


def write_s32(w: BitWriter, d: U32, value: int) -> None:
    if value >= 0:
        v = value << 1
    elif value == -(1 << 31):
        v = 0xFFFFFFFF
    else:
        v = ((-value - 1) << 1) | 1
    write_u32(w, d, v)


ENUM_DIST = (Val(0), Val(1), BitsOffset(4, 2), BitsOffset(6, 18))


def read_enum(r: BitReader, table: Type[IntEnum]) -> IntEnum:
    pos = r.bit_pos
    v = read_u32(r, ENUM_DIST)
    if v > 63:
        raise IllFormed(f"enum value {v} exceeds 63", pos >> 3)
    try:
        return table(v)
    except ValueError:
        raise IllFormed(f"{v} is not a valid {table.__name__}", pos >> 3) from None


def write_enum(w: BitWriter, value: int) -> None:
    write_u32(w, ENUM_DIST, int(value))


class BuReader:
    """Separate 16-bit-refilled bit buffer layered on a :class:`BitReader`."""

    __slots__ = ("parent", "buffer", "buffer_len")

    def __init__(self, parent: BitReader):
        self.parent = parent
        self.buffer = parent.u(16)
        self.buffer_len = 16

    def read(self, n: int) -> int:
        if n == 0:
            return 0
        if self.buffer_len < n:
            self.buffer |= self.parent.u(16) << self.buffer_len
            self.buffer_len += 16
        value = self.buffer & ((1 << n) - 1)
        self.buffer >>= n
        self.buffer_len -= n
        return value
