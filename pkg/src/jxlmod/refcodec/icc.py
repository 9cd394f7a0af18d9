"""ICC profile encoder.

``encode_icc_stream`` is the exact inverse of :func:`jxlmod.icc.decode_icc_stream`.
With ``structured=False`` it emits header residuals, an empty tag list and a
single raw copy.  With ``structured=True`` it also codes the tag table and
cycles through the other main-content commands so every decoder path is
exercised.
"""
from __future__ import annotations

from .. import brotli_io
from ..bitio import BitWriter
from ..errors import EncoderError
from ..icc import TAG_NAMES, TYPE_SIGNATURES, predict_header_byte, unshuffle


def _varint(v: int) -> bytes:
    out = bytearray()
    while v > 127:
        out.append(128 | (v & 127))
        v >>= 7
    out.append(v)
    return bytes(out)


def _tag_table(profile: bytes):
    if len(profile) < 132:
        return None
    n = int.from_bytes(profile[128:132], "big")
    if 132 + 12 * n > len(profile):
        return None
    tags = []
    for i in range(n):
        at = 132 + 12 * i
        tags.append((profile[at:at + 4], int.from_bytes(profile[at + 4:at + 8], "big"),
                     int.from_bytes(profile[at + 8:at + 12], "big")))
    return tags


def _encode_tags(tags, cmd: bytearray, data: bytearray) -> None:
    n = len(tags)
    cmd += _varint(n + 1)
    prev_start = prev_size = None
    i = 0
    while i < n:
        name, start, size = tags[i]
        names = [t[0] for t in tags[i:i + 3]]
        tagcode, count = 1, 1
        if names == [b"rTRC", b"gTRC", b"bTRC"] and all(
                t[1] == start and t[2] == size for t in tags[i:i + 3]):
            tagcode, count = 2, 3
        elif names == [b"rXYZ", b"gXYZ", b"bXYZ"] and all(
                t[1] == start + k * size and t[2] == size for k, t in enumerate(tags[i:i + 3])):
            tagcode, count = 3, 3
        elif name.decode("latin-1") in TAG_NAMES:
            tagcode = 4 + TAG_NAMES.index(name.decode("latin-1"))
        implicit_start = n * 12 + 128 if prev_start is None else prev_start + prev_size
        implicit_size = 0 if prev_size is None else prev_size
        command = tagcode
        extra = b""
        if start != implicit_start:
            command |= 64
            extra += _varint(start)
        if size != implicit_size:
            command |= 128
            extra += _varint(size)
        cmd.append(command)
        cmd += extra
        if tagcode == 1:
            data += name
        prev_start, prev_size = start, size
        i += count


_CYCLE = ("raw", "shuffle2", "shuffle4", "pred")


def _encode_body(profile: bytes, pos: int, starts, cmd: bytearray, data: bytearray) -> None:
    end = len(profile)
    k = 0
    while pos < end:
        chunk8 = profile[pos:pos + 8]
        if chunk8 == b"XYZ \0\0\0\0" and pos + 20 <= end:
            cmd.append(10)
            data += profile[pos + 8:pos + 20]
            pos += 20
            continue
        sig = chunk8[:4].decode("latin-1")
        if len(chunk8) == 8 and chunk8[4:] == b"\0\0\0\0" and sig in TYPE_SIGNATURES:
            cmd.append(16 + TYPE_SIGNATURES.index(sig))
            pos += 8
            continue
        nxt = min([s for s in starts if s > pos] + [end])
        run = profile[pos:nxt]
        kind = _CYCLE[k % len(_CYCLE)]
        if kind == "raw":
            cmd.append(1)
            cmd += _varint(len(run))
            data += run
        elif kind in ("shuffle2", "shuffle4"):
            width = 2 if kind == "shuffle2" else 4
            cmd.append(2 if width == 2 else 3)
            cmd += _varint(len(run))
            data += unshuffle(run, width)
        else:
            width = (1, 2, 4)[(k // 4) % 3]
            order = (k // 4) % 3
            stride = width * (1 + (k // 4) % 2)
            flags = (width - 1) | (order << 2)
            if stride != width:
                flags |= 16
            if stride * 4 >= pos:
                stride, flags = width, flags & ~16
            cmd.append(4)
            cmd.append(flags)
            if flags & 16:
                cmd += _varint(stride)
            cmd += _varint(len(run))
            residual = bytearray()
            at = pos
            while at < nxt:
                prev = [int.from_bytes(profile[at - stride * (i + 1):at - stride * (i + 1) + width], "big")
                        for i in range(order + 1)]
                if order == 0:
                    p = prev[0]
                elif order == 1:
                    p = 2 * prev[0] - prev[1]
                else:
                    p = 3 * prev[0] - 3 * prev[1] + prev[2]
                pb = (p % (1 << (8 * width))).to_bytes(width, "big")
                for j in range(min(width, nxt - at)):
                    residual.append((profile[at + j] - pb[j]) & 255)
                at += width
            data += unshuffle(bytes(residual), width) if width > 1 else bytes(residual)
        pos = nxt
        k += 1


def encode_icc_stream(profile: bytes, structured: bool = False) -> bytes:
    profile = bytes(profile)
    if not profile:
        raise EncoderError("empty ICC profile")
    size = len(profile)
    cmd = bytearray()
    data = bytearray()
    for i in range(min(128, size)):
        data.append((profile[i] - predict_header_byte(i, profile, size)) & 255)
    if size > 128:
        tags = _tag_table(profile) if structured else None
        if tags is None:
            cmd += _varint(0)
            pos = 128
            starts = []
        else:
            _encode_tags(tags, cmd, data)
            pos = 132 + 12 * len(tags)
            starts = sorted({t[1] for t in tags})
            if pos < size:
                cmd.append(0)
        if structured:
            _encode_body(profile, pos, starts, cmd, data)
        elif pos < size:
            cmd.append(1)
            cmd += _varint(size - pos)
            data += profile[pos:]
    return _varint(size) + _varint(len(cmd)) + bytes(cmd) + bytes(data)


def encode_icc(w: BitWriter, profile: bytes, structured: bool = False) -> None:
    w.pu0()
    w.write_bytes(brotli_io.compress(encode_icc_stream(profile, structured)))
