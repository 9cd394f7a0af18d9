"""Lossless-mode encoder: palettes, colour transforms and group residuals."""
from __future__ import annotations

from ..bitio import BitWriter
from ..errors import EncoderError
from ..lossless import (
    M32, NUM_COLOUR_TRANSFORMS, SMT0, ChannelPalette, LosslessParams,
    channel_max_values, invert_colour_transform,
)
from ..predict import WeightedPredictor
from .entropy import AnsStreamBuilder


def build_palette(plane, bits16: bool) -> ChannelPalette:
    return ChannelPalette(sorted(set(plane)))


def encode_palette16(pal: ChannelPalette) -> bytes:
    members = set(pal.values)
    n1 = pal.size
    n0 = 0x10000 - n1
    x1, x2 = 0, M32
    smt = [s << 11 for s in SMT0]
    ctx = 0
    out = bytearray()
    sumv = x = 0
    while x < 0x10000:
        v = 1 if x in members else 0
        pr = smt[ctx] >> 11
        d = (x2 - x1) & M32
        xmid = (x1 + (d >> 16) * pr + (((d & 0xFFFF) * pr) >> 16)) & M32
        if v:
            x2 = xmid
        else:
            x1 = (xmid + 1) & M32
        while ((x1 ^ x2) & 0xFF000000) == 0:
            out.append(x2 >> 24)
            x1 = (x1 << 8) & M32
            x2 = ((x2 << 8) + 255) & M32
        p0 = smt[ctx]
        smt[ctx] = p0 + ((((v << 27) - p0) * 5) >> 7)
        ctx = (ctx * 2 + v) & 0x3F
        x += 1
        sumv += v
        if sumv == n1 or x - sumv == n0:
            break
    out.append(x1 >> 24)
    return bytes(out)


def _write_bounded_bits(w: BitWriter, pal: ChannelPalette, total: int) -> None:
    members = set(pal.values)
    n1 = pal.size
    n0 = total - n1
    ones = zeros = 0
    for v in range(total):
        if ones == n1 or zeros == n0:
            break
        b = 1 if v in members else 0
        w.write(1, b)
        ones += b
        zeros += 1 - b
    w.pu0()


def encode_palettes(w: BitWriter, palettes, greyscale: bool, bits16: bool, total_pixels: int,
                    method16: int | None = None) -> None:
    """Write the per-channel palettes.  ``method16`` forces the 16-bit method;
    by default the context-mixing coder is used when it fits."""
    if total_pixels < 257:
        if any(p is not None for p in palettes):
            raise EncoderError("palettes need at least 257 pixels")
        return
    if all(p is None for p in palettes):
        w.write(8, 0)
        return
    w.write(8, 1)
    if not bits16 and greyscale:
        members = set(palettes[0].values)
        for v in range(256):
            w.write(1, 1 if v in members else 0)
        return
    total = 1 << (16 if bits16 else 8)
    nbits = 16 if bits16 else 8
    for p in palettes:
        w.write(1, p is not None)
    w.pu0()
    for p in palettes:
        w.write(nbits, (p.size if p is not None else total) - 1)
    for p in palettes:
        if p is None:
            continue
        if bits16:
            coded = encode_palette16(p)
            method = method16
            if method is None:
                method = 1 if len(coded) < 1 << 15 else 0
            if method == 1 and len(coded) >= 1 << 15:
                raise EncoderError("16-bit palette too large for the coded method")
            w.write(1, method)
            if method:
                w.write(15, len(coded))
                w.write_bytes(coded)
                continue
            w.write(15, 0)
        _write_bounded_bits(w, p, total)


def compact(plane, pal: ChannelPalette):
    index = {v: i for i, v in enumerate(pal.values)}
    try:
        return [index[v] for v in plane]
    except KeyError as e:
        raise EncoderError(f"value {e.args[0]} missing from the palette") from None


def encode_group(w: BitWriter, planes, greyscale: bool, bits16: bool, xsize: int, ysize: int,
                 palettes, transform: int = 0, modes=None) -> None:
    """Write one PassGroup holding ``planes`` (flat, full sample values)."""
    nch = 1 if greyscale else 3
    depth = 16 if bits16 else 8
    if len(planes) != nch or any(len(p) != xsize * ysize for p in planes):
        raise EncoderError("plane count or size mismatch")
    if not 0 <= transform < NUM_COLOUR_TRANSFORMS or (greyscale and transform):
        raise EncoderError(f"bad colour transform {transform}")
    modes = list(modes or [0] * nch)
    work = [compact(p, pal) if pal is not None else list(p) for p, pal in zip(planes, palettes)]
    if not greyscale:
        invert_colour_transform(work, transform, depth)
        w.write(8, transform)
    if not bits16:
        byte = modes[0] if greyscale else modes[0] | (modes[1] << 2) | (modes[2] << 4)
        w.write(8, byte)
    params = LosslessParams(bits16, xsize * ysize)
    shift, rnd, nc = params.max_err_shift, params.max_err_round, params.num_contexts
    max_values = channel_max_values(greyscale, bits16, transform, palettes)
    builder = AnsStreamBuilder(nc * nch)
    for ci in range(nch):
        wp = WeightedPredictor(xsize, ysize, bits16, max_values[ci], modes[ci])
        plane = work[ci]
        mv = max_values[ci]
        i = 0
        for y in range(ysize):
            for x in range(xsize):
                v = plane[i]
                i += 1
                if not 0 <= v <= mv:
                    raise EncoderError(f"sample {v} outside [0, {mv}]")
                pred, max_error, preds = wp.predict(x, y)
                d = wp.residual(pred, v)
                builder.hybrid(((max_error + rnd) >> shift) + nc * ci, d)
                wp.update(x, y, pred, preds, d, v)
    builder.write(w)
