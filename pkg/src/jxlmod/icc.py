"""ICC profile reconstruction from the Brotli-wrapped command/data streams."""
from __future__ import annotations

from typing import Callable

from . import brotli_io
from .bitio import BitReader
from .errors import IllFormed

TAG_NAMES = ("cprt", "wtpt", "bkpt", "rXYZ", "gXYZ", "bXYZ", "kXYZ", "rTRC", "gTRC",
             "bTRC", "kTRC", "chad", "desc", "chrn", "dmnd", "dmdd", "lumi")
TYPE_SIGNATURES = ("XYZ ", "desc", "text", "mluc", "para", "curv", "sf32", "gbd ")
# device class, colour space and PCS signatures of a typical display profile
DEVICE_CLASS_STRING = b"mntrRGB XYZ "
FIXED_HEADER_BYTES = {8: 4, 70: 246, 71: 214, 73: 1, 78: 211, 79: 45}
MAX_ICC_SIZE = 1 << 28


class _Stream:
    __slots__ = ("name", "data", "pos")

    def __init__(self, name, data):
        self.name = name
        self.data = data
        self.pos = 0

    @property
    def at_end(self) -> bool:
        return self.pos >= len(self.data)

    def byte(self) -> int:
        if self.pos >= len(self.data):
            raise IllFormed(f"read past the end of the ICC {self.name} stream")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise IllFormed(f"read past the end of the ICC {self.name} stream")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return bytes(out)

    def varint(self) -> int:
        value = shift = 0
        while True:
            b = self.byte()
            value += (b & 127) << shift
            if b <= 127:
                return value
            shift += 7
            if shift >= 63:
                raise IllFormed("Varint longer than 63 bits")


def predict_header_byte(i: int, out, output_size: int) -> int:
    """Predicted value of header byte ``i`` given the bytes already output."""
    if i < 4:
        return (output_size >> (8 * (3 - i))) & 255
    if i in (41, 42, 43) and out[40] == ord("A"):
        return ord("PPL"[i - 41])
    if i in (41, 42, 43) and out[40] == ord("M"):
        return ord("SFT"[i - 41])
    if i in (42, 43) and out[40] == ord("S") and out[41] == ord("G"):
        return ord("I "[i - 42])
    if i in (42, 43) and out[40] == ord("S") and out[41] == ord("U"):
        return ord("NW"[i - 42])
    if 80 <= i < 84:
        return out[i - 76]
    if i in FIXED_HEADER_BYTES:
        return FIXED_HEADER_BYTES[i]
    if 12 <= i < 24:
        return DEVICE_CLASS_STRING[i - 12]
    if 36 <= i < 40:
        return b"acsp"[i - 36]
    return 0


def shuffle(data: bytes, width: int) -> bytes:
    """Write ``data`` row-wise into ``width`` columns and read it column-wise."""
    n = len(data)
    return bytes(data[r * width + c] for c in range(width)
                 for r in range((n + width - 1) // width) if r * width + c < n)


def unshuffle(data: bytes, width: int) -> bytes:
    n = len(data)
    order = [r * width + c for c in range(width)
             for r in range((n + width - 1) // width) if r * width + c < n]
    out = bytearray(n)
    for src, dst in enumerate(order):
        out[dst] = data[src]
    return bytes(out)


def _u32be(v: int) -> bytes:
    return (v & 0xFFFFFFFF).to_bytes(4, "big")


def _finish(out, output_size, cmd, data):
    if not data.at_end:
        raise IllFormed("ICC data stream not fully consumed")
    if not cmd.at_end:
        raise IllFormed("ICC command stream not fully consumed")
    if len(out) != output_size:
        raise IllFormed(f"ICC profile has {len(out)} bytes, expected {output_size}")
    return bytes(out)


def _predicted_run(out, data, width, order, stride, num):
    v = data.take(num)
    if width in (2, 4):
        v = shuffle(v, width)
    pos = 0
    while pos < num:
        cur = len(out)
        prev = []
        for i in range(order + 1):
            at = cur - stride * (i + 1)
            prev.append(int.from_bytes(out[at:at + width], "big"))
        if order == 0:
            p = prev[0]
        elif order == 1:
            p = 2 * prev[0] - prev[1]
        else:
            p = 3 * prev[0] - 3 * prev[1] + prev[2]
        pbytes = (p % (1 << (8 * width))).to_bytes(width, "big")
        for j in range(min(width, num - pos)):
            out.append((v[pos] + pbytes[j]) & 255)
            pos += 1


def decode_icc_stream(stream: bytes) -> bytes:
    """Rebuild a profile from the decompressed encoded-ICC stream."""
    top = _Stream("encoded", stream)
    output_size = top.varint()
    commands_size = top.varint()
    if output_size > MAX_ICC_SIZE:
        raise IllFormed("ICC output size implausibly large")
    cmd = _Stream("command", top.take(commands_size))
    data = _Stream("data", stream[top.pos:])
    out = bytearray()

    def grow(extra):
        if len(out) + extra > output_size:
            raise IllFormed("ICC output exceeds the signalled size")

    header_size = min(128, output_size)
    for i in range(header_size):
        p = predict_header_byte(i, out, output_size)
        out.append((p + data.byte()) & 255)
    if output_size <= 128:
        return _finish(out, output_size, cmd, data)

    # tag list
    if cmd.at_end:
        return _finish(out, output_size, cmd, data)
    num_tags = cmd.varint() - 1
    if num_tags >= 0:
        grow(4)
        out += _u32be(num_tags)
        tagstart = tagsize = None
        while True:
            if cmd.at_end:
                return _finish(out, output_size, cmd, data)
            command = cmd.byte()
            tagcode = command & 63
            if tagcode == 0:
                break
            if command & 64 == 0:
                tagstart = num_tags * 12 + 128 if tagstart is None else tagstart + tagsize
            else:
                tagstart = cmd.varint()
            if command & 128 == 0:
                tagsize = 0 if tagsize is None else tagsize
            else:
                tagsize = cmd.varint()
            if tagcode == 1:
                entries = [(data.take(4), tagstart)]
            elif tagcode == 2:
                entries = [(n.encode(), tagstart) for n in ("rTRC", "gTRC", "bTRC")]
            elif tagcode == 3:
                entries = [(n.encode(), tagstart + k * tagsize)
                           for k, n in enumerate(("rXYZ", "gXYZ", "bXYZ"))]
            elif tagcode < 21:
                entries = [(TAG_NAMES[tagcode - 4].encode(), tagstart)]
            else:
                raise IllFormed(f"unknown ICC tag code {tagcode}")
            grow(12 * len(entries))
            for name, start in entries:
                out += name + _u32be(start) + _u32be(tagsize)

    # main content
    while not cmd.at_end:
        command = cmd.byte()
        if command == 1:
            num = cmd.varint()
            grow(num)
            out += data.take(num)
        elif command in (2, 3):
            num = cmd.varint()
            grow(num)
            out += shuffle(data.take(num), 2 if command == 2 else 4)
        elif command == 4:
            flags = cmd.byte()
            width = (flags & 3) + 1
            if width == 3:
                raise IllFormed("ICC predictor width 3")
            order = (flags & 12) >> 2
            if order == 3:
                raise IllFormed("ICC predictor order 3")
            stride = cmd.varint() if flags & 16 else width
            if stride * 4 >= len(out):
                raise IllFormed("ICC predictor stride reaches before the output start")
            if stride < width:
                raise IllFormed("ICC predictor stride shorter than its width")
            num = cmd.varint()
            grow(num)
            _predicted_run(out, data, width, order, stride, num)
        elif command == 10:
            grow(20)
            out += b"XYZ \0\0\0\0" + data.take(12)
        elif 16 <= command < 24:
            grow(8)
            out += TYPE_SIGNATURES[command - 16].encode() + b"\0\0\0\0"
        else:
            raise IllFormed(f"unknown ICC command {command}")
    return _finish(out, output_size, cmd, data)


def decode_icc(r: BitReader, brotli_decode: Callable = brotli_io.decompress_prefix) -> bytes:
    """Read the byte-aligned Brotli stream at ``r`` and rebuild the profile.

    ``brotli_decode(buf, offset, limit)`` must return ``(decoded, consumed)``.
    """
    r.pu0()
    start = r.byte_pos
    stream, used = brotli_decode(r.data, start, MAX_ICC_SIZE + 64)
    r.seek_byte(start + used)
    try:
        return decode_icc_stream(stream)
    except IllFormed as e:
        if e.offset is None:
            e.offset = start
        raise
