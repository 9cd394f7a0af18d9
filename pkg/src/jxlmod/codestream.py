"""Top-level codestream decoding: headers, ICC, and modular/lossless frames."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import lossless as ll
from .bitio import BitReader
from .errors import IllFormed, Unsupported
from .headers import (
    AnimationHeader, ColourSpace, FrameContext, FrameEncoding, FrameHeader, ImageMetadata,
    LoopFilter, PreviewHeader, SizeHeader, Toc, compute_group_grid, decode_signature, decode_toc,
    num_toc_entries,
)
from .icc import decode_icc
from .modular import decode_modular, initial_channels

JPEG1_SIGNATURE = b"\xff\xd8\xff\xe0"
RECOMPRESSED_JPEG_SIGNATURE = b"\x0a\x04\x42\xd2\xd5\x4e"


@dataclass
class Plane:
    """One decoded channel: ``rows`` of integer samples."""

    name: str
    width: int
    height: int
    bits: int
    rows: list


@dataclass
class Frame:
    header: FrameHeader
    toc: Toc
    xsize: int
    ysize: int
    start: int
    end: int
    planes: Optional[list] = None
    loop_filter: Optional[LoopFilter] = None

    @property
    def encoding(self) -> FrameEncoding:
        return self.header.encoding


@dataclass
class Codestream:
    size: SizeHeader
    metadata: ImageMetadata
    preview: Optional[PreviewHeader] = None
    animation: Optional[AnimationHeader] = None
    icc: Optional[bytes] = None
    preview_frame: Optional[Frame] = None
    frames: list = field(default_factory=list)


def detect_signature(data: bytes) -> str:
    """'jxl', 'jpeg1', 'recompressed-jpeg' or 'unknown'."""
    if data[:4] == JPEG1_SIGNATURE:
        return "jpeg1"
    if data[:6] == RECOMPRESSED_JPEG_SIGNATURE:
        return "recompressed-jpeg"
    if data[:2] == b"\xff\x0a":
        return "jxl"
    return "unknown"


def channel_layout(meta: ImageMetadata):
    """Names and bit depths of the modular channels in stream order."""
    grey = meta.colour_encoding.colour_space == ColourSpace.kGrey
    names = ["grey"] if grey else ["red", "green", "blue"]
    bits = [meta.bits_per_sample] * len(names)
    if meta.alpha_bits:
        names.append("alpha")
        bits.append(meta.alpha_bits)
    m2 = meta.m2
    if m2.depth_bits:
        names.append("depth")
        bits.append(m2.depth_bits)
    for i in range(m2.num_extra_channels):
        names.append(f"extra{i}")
        bits.append(m2.extra_channel_bits)
    return names, bits


def _modular_shapes(meta: ImageMetadata, xsize: int, ysize: int):
    names, _ = channel_layout(meta)
    m2 = meta.m2
    return initial_channels(xsize, ysize, 3 if "red" in names else 1, bool(meta.alpha_bits),
                            m2.depth_shift if m2.depth_bits else None, m2.num_extra_channels)


def _end_section(r: BitReader, end: int, what: str) -> None:
    r.pu0()
    if r.byte_pos != end:
        raise IllFormed(f"{what} does not fill its section ({r.byte_pos} != {end})", r.byte_pos)


def _section_reader(data: bytes, toc: Toc, i: int) -> tuple[BitReader, int]:
    start, length = toc.section(i)
    if start + length > len(data):
        raise IllFormed("TOC section runs past the end of the codestream", len(data))
    # a reader limited to the section, so overruns are caught where they happen
    return BitReader(data[:start + length], start * 8), start + length


def _decode_modular_frame(data, meta, fh, toc, xsize, ysize):
    names, bits = channel_layout(meta)
    shapes = _modular_shapes(meta, xsize, ysize)
    end = toc.end
    if end > len(data):
        raise IllFormed("modular frame runs past the end of the codestream", len(data))
    r = BitReader(data[:end], toc.start * 8)
    img = decode_modular(r, shapes, xsize, ysize, meta.bits_per_sample)
    r.pu0()
    # the six entries are progressive hints; only zero padding may follow the stream
    if any(data[r.byte_pos:end]):
        raise IllFormed("nonzero bytes after the modular stream", r.byte_pos)
    return [Plane(n, ch.width, ch.height, b, ch.data) for n, b, ch in zip(names, bits, img.channels)]


def _decode_modular_groups(data, meta, fh, toc, xsize, ysize):
    names, bits = channel_layout(meta)
    full = _modular_shapes(meta, xsize, ysize)
    out = [[[0] * w for _ in range(h)] for w, h, _, _ in full]
    for g in compute_group_grid(xsize, ysize):
        r, end = _section_reader(data, toc, g.index)
        shapes = _modular_shapes(meta, g.xsize, g.ysize)
        img = decode_modular(r, shapes, g.xsize, g.ysize, meta.bits_per_sample)
        _end_section(r, end, f"group {g.index}")
        for plane, ch, (_, _, hs, vs) in zip(out, img.channels, full):
            x0, y0 = g.x0 >> hs, g.y0 >> vs
            for y, row in enumerate(ch.data):
                plane[y0 + y][x0:x0 + len(row)] = row
    return [Plane(n, w, h, b, rows) for n, b, rows, (w, h, _, _) in zip(names, bits, out, full)]


def _decode_lossless(data, meta, fh, toc, xsize, ysize):
    mode = fh.lossless
    m2 = meta.m2
    if meta.alpha_bits or m2.depth_bits or m2.num_extra_channels:
        raise Unsupported("lossless frames with alpha, depth or extra channels")
    grey, bits16 = mode.greyscale, mode.bits16
    depth = 16 if bits16 else 8
    names = ["grey"] if grey else ["red", "green", "blue"]
    groups = compute_group_grid(xsize, ysize)
    full = [[[0] * xsize for _ in range(ysize)] for _ in names]
    if len(groups) == 1:
        r, end = _section_reader(data, toc, 0)
        palettes = ll.decode_palettes(r, grey, bits16, xsize * ysize)
        readers = [(r, end)]
    else:
        r, end = _section_reader(data, toc, 0)
        palettes = ll.decode_palettes(r, grey, bits16, xsize * ysize)
        _end_section(r, end, "palette section")
        readers = [_section_reader(data, toc, 1 + g.index) for g in groups]
    for g, (r, end) in zip(groups, readers):
        planes = ll.decode_group(r, grey, bits16, g.xsize, g.ysize, palettes)
        _end_section(r, end, f"group {g.index}")
        for dst, flat in zip(full, planes):
            for y in range(g.ysize):
                dst[g.y0 + y][g.x0:g.x0 + g.xsize] = flat[y * g.xsize:(y + 1) * g.xsize]
    return [Plane(n, xsize, ysize, depth, rows) for n, rows in zip(names, full)]


_FRAME_DECODERS = {
    FrameEncoding.kModular: _decode_modular_frame,
    FrameEncoding.kModularGroup: _decode_modular_groups,
    FrameEncoding.kLossless: _decode_lossless,
}


def read_frame(r: BitReader, ctx: FrameContext, decode_pixels: bool = True) -> Frame:
    """Read one frame starting at ``r`` and leave ``r`` at its end."""
    r.pu0()
    start = r.byte_pos
    fh = FrameHeader.decode(r, ctx)
    xsize, ysize = fh.frame_dims(ctx.size)
    lf = LoopFilter.decode(r) if fh.encoding == FrameEncoding.kPasses else None
    toc = decode_toc(r, num_toc_entries(fh, xsize, ysize))
    frame = Frame(fh, toc, xsize, ysize, start, toc.end, loop_filter=lf)
    if toc.end > len(r.data):
        raise IllFormed("frame sections run past the end of the codestream", len(r.data))
    if lf is not None and decode_pixels:
        # headers and TOC are navigable, the var-DCT payload is not decoded
        e = Unsupported("kPasses (Var-DCT) frames are not supported")
        e.frame = frame
        raise e
    if decode_pixels:
        frame.planes = _FRAME_DECODERS[fh.encoding](r.data, ctx.metadata, fh, toc, xsize, ysize)
    r.seek_byte(toc.end)
    return frame


def read_headers(r: BitReader) -> Codestream:
    data = r.data
    kind = detect_signature(data)
    if kind == "jpeg1":
        raise Unsupported("JPEG1 passthrough unsupported")
    if kind == "recompressed-jpeg":
        raise Unsupported("recompressed JPEG1 reconstruction unsupported")
    decode_signature(r)
    size = SizeHeader.decode(r)
    ctx = FrameContext(size, None)
    meta = ImageMetadata.decode(r, ctx)
    cs = Codestream(size, meta)
    if meta.m2.have_preview:
        cs.preview = PreviewHeader.decode(r)
    if meta.m2.have_animation:
        cs.animation = AnimationHeader.decode(r)
    if meta.have_icc:
        cs.icc = decode_icc(r)
    return cs


def decode_codestream(data: bytes, decode_pixels: bool = True, max_frames: Optional[int] = None) -> Codestream:
    """Decode headers, ICC profile and frames.

    With ``decode_pixels=False`` only headers and TOCs are read.  Decoding
    stops after ``max_frames`` frames when given.
    """
    r = BitReader(data)
    if not data:
        raise IllFormed("empty codestream", 0)
    cs = read_headers(r)
    try:
        _read_frames(r, cs, decode_pixels, max_frames)
    except (IllFormed, Unsupported) as e:
        # whatever was decoded so far stays available for reporting
        e.partial = cs
        raise
    return cs


def _read_frames(r, cs, decode_pixels, max_frames):
    ctx = FrameContext(cs.size, cs.metadata, cs.animation)
    if cs.preview is not None:
        pctx = FrameContext(cs.preview, cs.metadata, cs.animation)
        cs.preview_frame = read_frame(r, pctx, decode_pixels)
    while True:
        frame = read_frame(r, ctx, decode_pixels)
        cs.frames.append(frame)
        if frame.header.is_last:
            break
        if max_frames is not None and len(cs.frames) >= max_frames:
            return
    if r.byte_pos != len(r.data):
        raise IllFormed("trailing bytes after the last frame", r.byte_pos)
