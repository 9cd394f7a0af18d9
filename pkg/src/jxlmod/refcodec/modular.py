"""Modular sub-bitstream encoder and forward transforms."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from .. import brotli_io
from ..bitio import BitWriter, varint_bytes, write_varint
from ..errors import EncoderError
from ..modular import (
    ADAPTIVE_QUANTIZE, MAANS, MABEGABRAC, MABROTLI, PALETTE, QUANTIZE, SQUEEZE,
    SUBSAMPLE, SUBTRACT_GREEN, YCBCR, YCOCG, Channel, ModularImage, TransformInfo,
    bytes_per_pixel, compute_properties, eligible_reference_channels,
    property_ranges, shape_forward, squeeze_shape_step, squeeze_steps,
    subsample_groups, tendency, _median,
)
from ..predict import idiv
from .entropy import AbracEncoder, AnsStreamBuilder, Leaf, Split, TreeSpec, encode_ma_tree

TreeArg = Union[TreeSpec, Callable[[int, list], TreeSpec], None]


@dataclass
class ChannelPlan:
    """How one channel is written.

    ``tree`` may be a fixed tree or a callable ``(n_extra, ranges) -> tree``
    so that splits can refer to properties relative to the extra ones.
    """

    predictor: int = 0
    backend: int = MABEGABRAC
    tree: TreeArg = None
    q: int = 1
    lo: Optional[int] = None
    hi: Optional[int] = None


def _predict(predictor, rows, x, y, zero):
    if predictor == 0:
        return zero
    row = rows[y]
    left = row[x - 1] if x > 0 else zero
    if predictor == 3:
        return left
    top = rows[y - 1][x] if y > 0 else zero
    if predictor == 4:
        return top
    if predictor == 1:
        return idiv(left + top, 2)
    topleft = rows[y - 1][x - 1] if x > 0 and y > 0 else left
    return _median(left + top - topleft, left, top)


def _write_abrac(w: BitWriter, enc: AbracEncoder) -> None:
    for b in enc.finish():
        w.write(8, b)


def _pack_residual(signed, v, p, lo):
    if not signed:
        return v - lo
    d = v - p
    return 2 * d - 1 if d > 0 else -2 * d


def encode_channel(w: BitWriter, img: ModularImage, c: int, plan: ChannelPlan, has_quant: bool) -> None:
    ch = img.channels[c]
    vals = [v for row in ch.data for v in row]
    lo = min(vals) if plan.lo is None else plan.lo
    hi = max(vals) if plan.hi is None else plan.hi
    if vals and (min(vals) < lo or max(vals) > hi):
        raise EncoderError("channel samples outside the declared range")
    if plan.predictor not in range(5) or plan.backend not in range(3):
        raise EncoderError("bad predictor or backend")
    if has_quant and ch.q != 1 and lo == 0 and hi == 0:
        hi = 1  # widen the range so that q gets signalled
    write_varint(w, (plan.predictor << 2) + plan.backend)
    if lo <= 0:
        write_varint(w, 1 - lo)
    else:
        write_varint(w, 0)
        write_varint(w, lo - 1)
    write_varint(w, hi - lo)
    q = 1
    if has_quant and not (lo == 0 and hi == 0):
        q = ch.q
        write_varint(w, q)
    ch.min, ch.max, ch.q = lo, hi, q
    if lo == hi:
        return
    refs = eligible_reference_channels(img.channels, c, img.max_extra_properties)
    ranges = property_ranges(img.channels, c, refs)
    spec = plan.tree
    if callable(spec):
        spec = spec(len(refs) * 4, ranges)
    if spec is None:
        spec = Leaf()
    enc = AbracEncoder()
    tree = encode_ma_tree(enc, spec, ranges, plan.backend == MABEGABRAC)
    single = tree.is_single_leaf
    zero = ch.zero
    rows = ch.data
    chans = img.channels

    def leaf_at(x, y):
        return 0 if single else tree.lookup(compute_properties(chans, c, x, y, refs))

    if plan.backend == MABEGABRAC:
        for y in range(ch.height):
            row = rows[y]
            for x in range(ch.width):
                k = leaf_at(x, y)
                p = _predict(plan.predictor, rows, x, y, zero)
                enc.put_begabrac(tree.leaf_contexts[k], lo - p, hi - p, row[x] - p)
        _write_abrac(w, enc)
        return

    _write_abrac(w, enc)
    signed, bpp = bytes_per_pixel(plan.predictor, lo, hi)
    nleaves = tree.num_leaves
    streams = [[bytearray() for _ in range(bpp)] for _ in range(nleaves)]
    order = []
    for y in range(ch.height):
        row = rows[y]
        for x in range(ch.width):
            k = leaf_at(x, y)
            p = _predict(plan.predictor, rows, x, y, zero)
            diff = _pack_residual(signed, row[x], p, lo)
            for b in range(bpp):
                byte = (diff >> (8 * b)) & 255
                streams[k][b].append(byte)
                order.append((k * bpp + b, byte))
    if plan.backend == MABROTLI:
        payload = bytearray()
        for leaf in streams:
            for s in leaf:
                payload += varint_bytes(len(s)) + s
        w.pu0()
        w.write_bytes(brotli_io.compress(bytes(payload)))
        return
    for leaf in streams:
        for s in leaf:
            write_varint(w, len(s))
    builder = AnsStreamBuilder(nleaves * bpp)
    for ctx, byte in order:
        builder.symbol(ctx, byte)
    builder.write(w)


def encode_modular(w: BitWriter, shapes, xsize: int, ysize: int, transforms, stored,
                   plans=None, max_extra_properties: int = 0, bit_depth: int = 8) -> ModularImage:
    """Write a modular sub-bitstream.

    ``transforms`` is a list of ``(tr_id, params)``; ``stored`` holds the
    sample rows of every channel of the transformed vector, in order.
    ``plans`` is one :class:`ChannelPlan` for all channels or a list.
    Returns the shaped image as the decoder will see it before inversion.
    """
    img = ModularImage([Channel(a, b, hs, vs) for a, b, hs, vs in shapes],
                       xsize=xsize, ysize=ysize, bit_depth=bit_depth,
                       max_extra_properties=max_extra_properties)
    infos = [TransformInfo(t, list(p)) for t, p in transforms]
    shape_forward(img, infos)
    if len(stored) != len(img.channels):
        raise EncoderError(f"expected {len(img.channels)} stored channels, got {len(stored)}")
    if plans is None:
        plans = ChannelPlan()
    if isinstance(plans, ChannelPlan):
        plans = [plans] * len(img.channels)
    for ch, data, plan in zip(img.channels, stored, plans):
        ch.q = plan.q
        if isinstance(data, Channel):
            ch.q = data.q
            data = data.data
        if len(data) != ch.height or any(len(r) != ch.width for r in data):
            raise EncoderError("stored channel has the wrong dimensions")
        ch.data = [list(r) for r in data]
    write_varint(w, max_extra_properties)
    write_varint(w, len(infos))
    for t in infos:
        write_varint(w, (len(t.params) << 4) + t.tr_id)
        for p in t.params:
            write_varint(w, p)
    has_quant = any(t.tr_id in (QUANTIZE, ADAPTIVE_QUANTIZE) for t in infos)
    for c, ch in enumerate(img.channels):
        if ch.width == 0 or ch.height == 0:
            continue
        encode_channel(w, img, c, plans[c], has_quant)
    return img


# ---------------------------------------------------------------------------
# forward transforms on sample data

def forward_squeeze_h(ch: Channel):
    """Split ``ch`` horizontally into (average, residual) sample rows."""
    avg_rows, res_rows = [], []
    for row in ch.data:
        w = len(row)
        avg = [(row[2 * i] + row[2 * i + 1] + (row[2 * i] > row[2 * i + 1])) >> 1
               for i in range(w // 2)]
        if w & 1:
            avg.append(row[-1])
        res = []
        for i in range(w // 2):
            a, b = row[2 * i], row[2 * i + 1]
            nxt = avg[i + 1] if i + 1 < len(avg) else avg[i]
            left = row[2 * i - 1] if i > 0 else avg[i]
            res.append((a - b) - tendency(left, avg[i], nxt))
        avg_rows.append(avg)
        res_rows.append(res)
    return avg_rows, res_rows


def _transpose(rows, width):
    return [list(col) for col in zip(*rows)] if rows else [[] for _ in range(width)]


def forward_squeeze_v(ch: Channel):
    t = Channel(ch.height, ch.width, data=_transpose(ch.data, ch.width))
    a, r = forward_squeeze_h(t)
    return _transpose(a, (ch.height + 1) // 2), _transpose(r, ch.height // 2)


def forward_squeeze_step(channels, sid, begin, end):
    datas = []
    for c in range(begin, end + 1):
        ch = channels[c]
        datas.append(forward_squeeze_h(ch) if sid & 1 else forward_squeeze_v(ch))
    squeeze_shape_step(channels, sid, begin, end)
    offset = end + 1 if sid < 2 else len(channels) - (end - begin + 1)
    for i, (a, r) in enumerate(datas):
        channels[begin + i].data = a
        channels[offset + i].data = r


def forward_ycocg(r, g, b):
    co = r - b
    cg = g - b - (co >> 1)
    return g + ((-cg) >> 1), co, cg


def forward_subtract_green(r, g, b, depth):
    s = 1 << (depth - 1)
    return g, r - g + s, b - g + s


def forward_ycbcr(r, g, b, depth):
    s = 1 << (depth - 1)
    y = math.floor(0.299 * r + 0.587 * g + 0.114 * b + 0.5)
    cb = math.floor(-0.168736 * r - 0.331264 * g + 0.5 * b + 0.5) + s
    cr = math.floor(0.5 * r - 0.418688 * g - 0.081312 * b + 0.5) + s
    return y, cb, cr


def _map3(chans, fn):
    a, b, c = chans
    for ra, rb, rc in zip(a.data, b.data, c.data):
        for x in range(len(ra)):
            ra[x], rb[x], rc[x] = fn(ra[x], rb[x], rc[x])


def forward_transforms(img: ModularImage, transforms):
    """Apply forward transforms to ``img`` (channels holding samples).

    ``transforms`` is a list of ``(tr_id, params)``; Palette parameters may
    be ``(begin, end)`` and get ``nb_colours`` filled in, AdaptiveQuantize
    accepts an optional third element with a weight plane.  Returns the
    ``(tr_id, params)`` list to signal.
    """
    out = []
    depth = img.bit_depth
    for tr_id, params in transforms:
        params = list(params)
        chans = img.channels
        m = img.nb_meta_channels
        if tr_id == YCOCG:
            _map3(chans[m:m + 3], forward_ycocg)
        elif tr_id == SUBTRACT_GREEN:
            _map3(chans[m:m + 3], lambda r, g, b: forward_subtract_green(r, g, b, depth))
        elif tr_id == YCBCR:
            _map3(chans[0:3], lambda r, g, b: forward_ycbcr(r, g, b, depth))
        elif tr_id == PALETTE:
            begin, end = params[:2]
            params = [begin, end] + forward_palette(img, begin, end)
        elif tr_id == SUBSAMPLE:
            for begin, end, hs, vs in subsample_groups(params):
                for c in range(begin, end + 1):
                    ch = chans[c]
                    ch.data = [row[::1 << hs] for row in ch.data[::1 << vs]]
                    ch.width = (ch.width + (1 << hs) - 1) >> hs
                    ch.height = (ch.height + (1 << vs) - 1) >> vs
                    ch.hshift += hs
                    ch.vshift += vs
        elif tr_id == SQUEEZE:
            for sid, begin, end in squeeze_steps(img, params):
                forward_squeeze_step(chans, sid, begin, end)
        elif tr_id == QUANTIZE:
            for ch in chans:
                if ch.q != 1:
                    ch.data = [[v // ch.q for v in row] for row in ch.data]
        elif tr_id == ADAPTIVE_QUANTIZE:
            weights = params[2] if len(params) > 2 else None
            params = params[:2]
            forward_adaptive_quantize(img, *params, weights=weights)
        else:
            raise EncoderError(f"unknown transform {tr_id}")
        out.append((tr_id, params))
    return out


def forward_palette(img: ModularImage, begin: int, end: int):
    chans = img.channels
    src = chans[begin:end + 1]
    tuples = sorted({t for rows in zip(*(c.data for c in src)) for t in zip(*rows)})
    index = {t: i for i, t in enumerate(tuples)}
    nb = len(tuples)
    meta = Channel(nb, end - begin + 1, -1, -1,
                   data=[[t[c] for t in tuples] for c in range(end - begin + 1)])
    first = src[0]
    first.data = [[index[t] for t in zip(*rows)] for rows in zip(*(c.data for c in src))]
    del chans[begin + 1:end + 1]
    chans.insert(0, meta)
    img.nb_meta_channels += 1
    return [nb]


def forward_adaptive_quantize(img: ModularImage, aq_shift: int, store: int = 0, weights=None):
    """Quantize data channels by ``q * w``; with ``store`` the remainders
    are kept so the inverse is exact.  The meta channel's own q stays 1."""
    mw = ((img.xsize - 1) >> aq_shift) + 1
    mh = ((img.ysize - 1) >> aq_shift) + 1
    if weights is None:
        weights = [[1] * mw for _ in range(mh)]
    meta = Channel(mw, mh, aq_shift, aq_shift, data=[list(r) for r in weights])
    first = img.nb_meta_channels
    data_chans = img.channels[first:]
    rems = []
    for ch in data_chans:
        rem = ch.copy()
        skip = ch.hshift < 0 or ch.vshift < 0 or aq_shift < ch.hshift or aq_shift < ch.vshift
        for y in range(ch.height):
            for x in range(ch.width):
                v = ch.data[y][x]
                if skip:
                    rem.data[y][x] = 0
                    continue
                f = ch.q * weights[(y << ch.vshift) >> aq_shift][(x << ch.hshift) >> aq_shift]
                s = v // f if f else 0
                ch.data[y][x] = s
                rem.data[y][x] = v - s * f
        rems.append(rem)
    img.channels.insert(0, meta)
    img.nb_meta_channels += 1
    if store:
        img.channels.extend(rems)
