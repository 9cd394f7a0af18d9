"""Modular image sub-bitstream: channel vectors, per-channel decoding through
the three entropy backends, and the inverse transforms."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import brotli_io
from .bitio import BitReader, read_varint
from .entropy import (
    AbracDecoder,
    AnsDecoder,
    MaTree,
    decode_clustered_distributions,
    decode_ma_tree,
)
from .errors import IllFormed
from .predict import idiv

YCBCR, YCOCG, SUBTRACT_GREEN, PALETTE, SUBSAMPLE, SQUEEZE, QUANTIZE, ADAPTIVE_QUANTIZE = range(8)
TRANSFORM_NAMES = ("YCbCr", "YCoCg", "SubtractGreen", "Palette", "Subsample",
                   "Squeeze", "Quantize", "AdaptiveQuantize")

MABEGABRAC, MABROTLI, MAANS = 0, 1, 2
NUM_FIXED_PROPERTIES = 13
MAX_SHIFT = 30


@dataclass
class Channel:
    width: int
    height: int
    hshift: int = 0
    vshift: int = 0
    q: int = 1
    min: int = 0
    max: int = 0
    data: list = field(default_factory=list)   # rows of ints

    @property
    def zero(self) -> int:
        return max(self.min, min(self.max, 0))

    def copy(self) -> "Channel":
        return Channel(self.width, self.height, self.hshift, self.vshift, self.q,
                       self.min, self.max, [list(row) for row in self.data])

    def fill(self, value: int) -> None:
        self.data = [[value] * self.width for _ in range(self.height)]

    def __call__(self, x: int, y: int) -> int:
        return self.data[y][x]


@dataclass
class TransformInfo:
    tr_id: int
    params: list
    state: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return TRANSFORM_NAMES[self.tr_id]


@dataclass
class ModularImage:
    channels: list
    nb_meta_channels: int = 0
    xsize: int = 0
    ysize: int = 0
    bit_depth: int = 8
    max_extra_properties: int = 0
    transforms: list = field(default_factory=list)

    def shapes(self):
        return [(c.width, c.height, c.hshift, c.vshift) for c in self.channels]

    def planes(self):
        return [c.data for c in self.channels]


def initial_channels(xsize, ysize, num_colour, alpha, depth_shift=None, num_extra=0):
    """Channel geometry of a full image: colour, alpha, depth then extras."""
    shapes = [(xsize, ysize, 0, 0)] * num_colour
    if alpha:
        shapes.append((xsize, ysize, 0, 0))
    if depth_shift is not None:
        s = depth_shift
        shapes.append((-(-xsize >> s), -(-ysize >> s), s, s))
    shapes += [(xsize, ysize, 0, 0)] * num_extra
    return shapes


# ---------------------------------------------------------------------------
# transform headers and channel-vector shaping

def read_transform(r: BitReader) -> TransformInfo:
    start = r.byte_pos
    head = read_varint(r)
    tr_id = head & 15
    nb = head >> 4
    if tr_id >= 8:
        raise IllFormed(f"unknown transform id {tr_id}", start)
    if nb * 8 > r.remaining_bits():
        raise IllFormed("transform parameter count exceeds the stream", start)
    return TransformInfo(tr_id, [read_varint(r) for _ in range(nb)])


def _check_range(img, begin, end, what):
    if not 0 <= begin <= end < len(img.channels):
        raise IllFormed(f"{what}: channel range [{begin}, {end}] is invalid")


def _check_same_dims(chans, what):
    w, h = chans[0].width, chans[0].height
    if any(c.width != w or c.height != h for c in chans):
        raise IllFormed(f"{what}: channels differ in dimensions")


def _colour_channels(img, t):
    first = 0 if t.tr_id == YCBCR else img.nb_meta_channels
    if first + 3 > len(img.channels):
        raise IllFormed(f"{t.name} needs three channels")
    chans = img.channels[first:first + 3]
    _check_same_dims(chans, t.name)
    return chans


def _shape_colour(img, t):
    if t.params:
        raise IllFormed(f"{t.name} takes no parameters")
    _colour_channels(img, t)


def _shape_palette(img, t):
    if len(t.params) != 3:
        raise IllFormed("Palette needs exactly three parameters")
    begin, end, nb_colours = t.params
    _check_range(img, begin, end, "Palette")
    _check_same_dims(img.channels[begin:end + 1], "Palette")
    del img.channels[begin + 1:end + 1]
    img.channels.insert(0, Channel(nb_colours, end - begin + 1, -1, -1))
    img.nb_meta_channels += 1


SUBSAMPLE_SHORTHAND = {0: (1, 2, 1, 1), 1: (1, 2, 1, 0), 2: (1, 2, 0, 1), 3: (1, 2, 2, 0)}


def subsample_groups(params):
    if not params:
        params = SUBSAMPLE_SHORTHAND[0]
    elif len(params) == 1:
        if params[0] not in SUBSAMPLE_SHORTHAND:
            raise IllFormed(f"unknown Subsample shorthand {params[0]}")
        params = SUBSAMPLE_SHORTHAND[params[0]]
    elif len(params) % 4:
        raise IllFormed("Subsample parameter count must be 0, 1 or a multiple of 4")
    return [tuple(params[i:i + 4]) for i in range(0, len(params), 4)]


def _shape_subsample(img, t):
    record = []
    for begin, end, hs, vs in subsample_groups(t.params):
        _check_range(img, begin, end, "Subsample")
        if hs > MAX_SHIFT or vs > MAX_SHIFT:
            raise IllFormed("Subsample shift too large")
        for c in range(begin, end + 1):
            ch = img.channels[c]
            record.append((c, hs, vs, ch.width, ch.height))
            ch.width = (ch.width + (1 << hs) - 1) >> hs
            ch.height = (ch.height + (1 << vs) - 1) >> vs
            ch.hshift += hs
            ch.vshift += vs
    t.state["record"] = record


def default_squeeze_params(img):
    first = img.nb_meta_channels
    last = len(img.channels) - 1
    count = last - first + 1
    params = []
    if count < 1:
        return params
    w = img.channels[first].width
    h = img.channels[first].height
    if count > 2 and img.channels[first + 1].width == w and img.channels[first + 1].height == h:
        params += [3, first + 1, first + 2, 2, first + 1, first + 2]
    if h >= w and h > 8:
        params += [0, first, last]
        h = (h + 1) // 2
    while w > 8 or h > 8:
        if w > 8:
            params += [1, first, last]
            w = (w + 1) // 2
        if h > 8:
            params += [0, first, last]
            h = (h + 1) // 2
    return params


def squeeze_steps(img, params):
    if not params:
        params = default_squeeze_params(img)
    if len(params) % 3:
        raise IllFormed("Squeeze parameter count must be a multiple of three")
    steps = [tuple(params[i:i + 3]) for i in range(0, len(params), 3)]
    for sid, _, _ in steps:
        if sid > 3:
            raise IllFormed(f"unknown squeeze step {sid}")
    return steps


def squeeze_shape_step(channels, sid, begin, end):
    if not 0 <= begin <= end < len(channels):
        raise IllFormed(f"Squeeze: channel range [{begin}, {end}] is invalid")
    offset = end + 1 if sid < 2 else len(channels)
    horizontal = sid & 1
    for i, c in enumerate(range(begin, end + 1)):
        ch = channels[c]
        if horizontal:
            w = ch.width
            ch.width = (w + 1) // 2
            ch.hshift += 1
            res = Channel(w // 2, ch.height, ch.hshift, ch.vshift, ch.q)
        else:
            h = ch.height
            ch.height = (h + 1) // 2
            ch.vshift += 1
            res = Channel(ch.width, h // 2, ch.hshift, ch.vshift, ch.q)
        channels.insert(offset + i, res)


def _shape_squeeze(img, t):
    steps = squeeze_steps(img, t.params)
    for sid, begin, end in steps:
        squeeze_shape_step(img.channels, sid, begin, end)
    t.state["steps"] = steps


def _shape_quantize(img, t):
    pass


def _shape_adaptive_quantize(img, t):
    if len(t.params) not in (1, 2):
        raise IllFormed("AdaptiveQuantize takes one or two parameters")
    aq_shift = t.params[0]
    store = t.params[1] if len(t.params) == 2 else 0
    if store > 1:
        raise IllFormed("store_remainders must be 0 or 1")
    if aq_shift > MAX_SHIFT:
        raise IllFormed("aq_shift too large")
    w = ((img.xsize - 1) >> aq_shift) + 1 if img.xsize else 0
    h = ((img.ysize - 1) >> aq_shift) + 1 if img.ysize else 0
    img.channels.insert(0, Channel(w, h, aq_shift, aq_shift))
    img.nb_meta_channels += 1
    if store:
        endc = len(img.channels)
        for i in range(img.nb_meta_channels, endc):
            img.channels.append(img.channels[i].copy())


SHAPERS = {
    YCBCR: _shape_colour, YCOCG: _shape_colour, SUBTRACT_GREEN: _shape_colour,
    PALETTE: _shape_palette, SUBSAMPLE: _shape_subsample, SQUEEZE: _shape_squeeze,
    QUANTIZE: _shape_quantize, ADAPTIVE_QUANTIZE: _shape_adaptive_quantize,
}


def shape_forward(img: ModularImage, transforms) -> None:
    for t in transforms:
        SHAPERS[t.tr_id](img, t)
        img.transforms.append(t)


# ---------------------------------------------------------------------------
# properties

def eligible_reference_channels(channels, c, max_extra):
    out = []
    k = 0
    for i in range(c - 1, -1, -1):
        if k >= max_extra:
            break
        ch = channels[i]
        if ch.min == ch.max or ch.width == 0 or ch.height == 0 or ch.hshift < 0:
            continue
        out.append(i)
        k += 4
    return out


def property_ranges(channels, c, refs):
    ch = channels[c]
    lo, hi = ch.min, ch.max
    ranges = []
    for i in refs:
        ri = channels[i]
        m = max(abs(ri.min), abs(ri.max))
        ranges += [(0, m), (ri.min, ri.max), (0, abs(ri.min - ri.max)),
                   (ri.min - ri.max, ri.max - ri.min)]
    a = max(abs(lo), abs(hi))
    d = (lo - hi, hi - lo)
    ranges += [(0, a), (0, a), (lo, hi), (lo, hi), (0, ch.height - 1), (0, ch.width - 1),
               (2 * lo - hi, 2 * hi - lo), (2 * lo - hi, 2 * hi - lo), d, d, d, d, d]
    return ranges


def _median(a, b, c):
    return sorted((a, b, c))[1]


def compute_properties(channels, c, x, y, refs):
    """Property vector for sample (x, y) of channel ``c``.

    ``refs`` lists the earlier channels contributing extra properties (see
    :func:`eligible_reference_channels`).
    """
    ch = channels[c]
    props = []
    for i in refs:
        ri = channels[i]
        ry = (y << ch.vshift) >> ri.vshift
        rx = (x << ch.hshift) >> ri.hshift
        if ry >= ri.height:
            ry = ri.height - 1
        if rx >= ri.width:
            rx = ri.width - 1
        rows = ri.data
        rv = rows[ry][rx]
        rleft = rows[ry][rx - 1] if rx > 0 else ri.zero
        rtop = rows[ry - 1][rx] if ry > 0 else rleft
        rtopleft = rows[ry - 1][rx - 1] if rx > 0 and ry > 0 else rleft
        rp = _median(rleft + rtop - rtopleft, rleft, rtop)
        props += (abs(rv), rv, abs(rv - rp), rv - rp)
    rows = ch.data
    row = rows[y]
    left = row[x - 1] if x > 0 else ch.zero
    top = rows[y - 1][x] if y > 0 else left
    topleft = rows[y - 1][x - 1] if x > 0 and y > 0 else left
    topright = rows[y - 1][x + 1] if y > 0 and x + 1 < ch.width else top
    leftleft = row[x - 2] if x > 1 else left
    toptop = rows[y - 2][x] if y > 1 else top
    props += (abs(top), abs(left), top, left, y, x, left + top - topleft,
              topleft + topright - top, left - topleft, topleft - top,
              top - topright, top - toptop, left - leftleft)
    return props


# ---------------------------------------------------------------------------
# channel decoding

@dataclass
class ChannelHeader:
    predictor: int
    entropy_coder: int
    min: int
    max: int
    q: int = 1


def read_channel_header(r: BitReader, has_quant: bool) -> ChannelHeader:
    start = r.byte_pos
    v = read_varint(r)
    predictor, coder = v >> 2, v & 3
    if predictor > 4:
        raise IllFormed(f"unknown predictor {predictor}", start)
    if coder > 2:
        raise IllFormed(f"unknown entropy coder {coder}", start)
    lo = 1 - read_varint(r)
    if lo == 1:
        lo = read_varint(r) + 1
    hi = lo + read_varint(r)
    q = 1
    if has_quant and not (lo == 0 and hi == 0):
        q = read_varint(r)
    return ChannelHeader(predictor, coder, lo, hi, q)


def bytes_per_pixel(predictor, lo, hi):
    maxval = hi - lo
    signed = not (predictor == 0 and (hi <= 0 or lo >= 0))
    if signed:
        maxval *= 2
    bpp = 1
    for limit in (0xFF, 0xFFFF, 0xFFFFFFFF):
        if maxval > limit:
            bpp += 1
    return signed, bpp


class _ByteStream:
    __slots__ = ("data", "pos")

    def __init__(self, data):
        self.data = data
        self.pos = 0

    def next_byte(self):
        if self.pos >= len(self.data):
            raise IllFormed("channel substream exhausted")
        b = self.data[self.pos]
        self.pos += 1
        return b


class _AnsByteStream:
    """Byte substream whose bytes are ANS symbols of a dedicated context."""

    __slots__ = ("dec", "table", "left")

    def __init__(self, dec, table, length):
        self.dec = dec
        self.table = table
        self.left = length

    def next_byte(self):
        if self.left <= 0:
            raise IllFormed("channel substream exhausted")
        self.left -= 1
        b = self.dec.read_symbol(self.table)
        if b > 255:
            raise IllFormed(f"ANS byte symbol {b} out of range")
        return b


def _split_varint(buf, pos):
    value = shift = 0
    while True:
        if pos >= len(buf):
            raise IllFormed("substream length runs past the Brotli payload")
        b = buf[pos]
        pos += 1
        value += (b & 127) << shift
        if b <= 127:
            return value, pos
        shift += 7
        if shift >= 63:
            raise IllFormed("Varint longer than 63 bits")


def _brotli_streams(r, tree, bpp, limit):
    r.pu0()
    start = r.byte_pos
    payload, used = brotli_io.decompress_prefix(r.data, start, max_output=limit)
    r.seek_byte(start + used)
    streams = []
    pos = 0
    for _ in range(tree.num_leaves):
        leaf = []
        for _ in range(bpp):
            n, pos = _split_varint(payload, pos)
            if pos + n > len(payload):
                raise IllFormed("substream runs past the Brotli payload", start)
            leaf.append(_ByteStream(payload[pos:pos + n]))
            pos += n
        streams.append(leaf)
    if pos != len(payload):
        raise IllFormed("unused bytes after the last substream", start)
    return streams


def _ans_streams(r, tree, bpp, limit):
    lengths = []
    for _ in range(tree.num_leaves * bpp):
        n = read_varint(r)
        if n > limit:
            raise IllFormed("substream longer than the channel", r.byte_pos)
        lengths.append(n)
    dists = decode_clustered_distributions(r, len(lengths))
    dec = AnsDecoder(r)
    streams = []
    for k in range(tree.num_leaves):
        streams.append([_AnsByteStream(dec, dists[k * bpp + b], lengths[k * bpp + b])
                        for b in range(bpp)])
    return dec, streams


def _predict(predictor, row, prev, x, zero):
    if predictor == 0:
        return zero
    left = row[x - 1] if x > 0 else zero
    if predictor == 3:
        return left
    top = prev[x] if prev is not None else zero
    if predictor == 4:
        return top
    if predictor == 1:
        return idiv(left + top, 2)
    topleft = prev[x - 1] if prev is not None and x > 0 else left
    return _median(left + top - topleft, left, top)


def decode_channel(r: BitReader, img: ModularImage, c: int, hdr: ChannelHeader) -> None:
    ch = img.channels[c]
    ch.min, ch.max, ch.q = hdr.min, hdr.max, hdr.q
    if hdr.min == hdr.max:
        ch.fill(hdr.min)
        return
    refs = eligible_reference_channels(img.channels, c, img.max_extra_properties)
    ranges = property_ranges(img.channels, c, refs)
    dec = AbracDecoder(r)
    tree = decode_ma_tree(dec, ranges, hdr.entropy_coder == MABEGABRAC)
    width, height = ch.width, ch.height
    lo, hi = ch.min, ch.max
    zero = ch.zero
    predictor = hdr.predictor
    single = tree.is_single_leaf
    chans = img.channels
    ch.data = rows = []
    ans = None
    bega = hdr.entropy_coder == MABEGABRAC
    if bega:
        ctxs = tree.leaf_contexts
        read = dec.read_begabrac
    else:
        signed, bpp = bytes_per_pixel(predictor, lo, hi)
        limit = width * height
        if hdr.entropy_coder == MABROTLI:
            streams = _brotli_streams(r, tree, bpp, (limit + 10) * bpp * tree.num_leaves)
        else:
            ans, streams = _ans_streams(r, tree, bpp, limit)
    prev = None
    for y in range(height):
        row = []
        rows.append(row)
        for x in range(width):
            k = 0 if single else tree.lookup(compute_properties(chans, c, x, y, refs))
            p = _predict(predictor, row, prev, x, zero)
            if bega:
                row.append(p + read(ctxs[k], lo - p, hi - p))
                continue
            ss = streams[k]
            diff = ss[0].next_byte()
            for b in range(1, bpp):
                diff += ss[b].next_byte() << (8 * b)
            if signed:
                v = ((diff + 1) >> 1 if diff & 1 else -(diff >> 1)) + p
            else:
                v = diff + lo
            if v < lo or v > hi:
                raise r.error(f"sample {v} outside channel range [{lo}, {hi}]")
            row.append(v)
        prev = row
    if not bega:
        for leaf in streams:
            for s in leaf:
                left = s.left if ans is not None else len(s.data) - s.pos
                if left:
                    raise r.error("channel substream not fully consumed")
        if ans is not None:
            ans.check_final()


# ---------------------------------------------------------------------------
# inverse transforms

def tendency(a: int, b: int, c: int) -> int:
    x = idiv(4 * a - 3 * c - b + 6, 12)
    if a >= b >= c:
        if x - (x & 1) > 2 * (a - b):
            x = 2 * (a - b) + 1
        if x + (x & 1) > 2 * (b - c):
            x = 2 * (b - c)
        return x
    if a <= b <= c:
        if x + (x & 1) < 2 * (a - b):
            x = 2 * (a - b) - 1
        if x - (x & 1) < 2 * (b - c):
            x = 2 * (b - c)
        return x
    return 0


def refresh_range(ch: Channel) -> None:
    """Reset min/max to the extremes of samples rebuilt by an inverse transform."""
    vals = [v for row in ch.data for v in row]
    ch.min = min(vals, default=0)
    ch.max = max(vals, default=0)


def _unsqueeze_row(avg, res):
    w1, w2 = len(avg), len(res)
    out = [0] * (w1 + w2)
    for x in range(w2):
        a = avg[x]
        nxt = avg[x + 1] if x + 1 < w1 else a
        left = out[2 * x - 1] if x > 0 else a
        diff = res[x] + tendency(left, a, nxt)
        sgn = (diff > 0) - (diff < 0)
        first = (2 * a + diff - sgn * (diff & 1)) >> 1
        out[2 * x] = first
        out[2 * x + 1] = first - diff
    if w1 > w2:
        out[2 * w2] = avg[w2]
    return out


def inv_hsqueeze(avg: Channel, res: Channel) -> Channel:
    if avg.height != res.height or avg.width not in (res.width, res.width + 1):
        raise IllFormed("horizontal squeeze channels have incompatible dimensions")
    out = Channel(avg.width + res.width, avg.height, avg.hshift, avg.vshift, avg.q)
    out.data = [_unsqueeze_row(a, b) for a, b in zip(avg.data, res.data)]
    return out


def inv_vsqueeze(avg: Channel, res: Channel) -> Channel:
    if avg.width != res.width or avg.height not in (res.height, res.height + 1):
        raise IllFormed("vertical squeeze channels have incompatible dimensions")
    h1, h2, w = avg.height, res.height, avg.width
    out = Channel(w, h1 + h2, avg.hshift, avg.vshift, avg.q)
    rows = [None] * (h1 + h2)
    a, rs = avg.data, res.data
    for y in range(h2):
        cur, nxt_row = a[y], a[y + 1] if y + 1 < h1 else a[y]
        top_row = rows[2 * y - 1] if y > 0 else cur
        first_row, second_row = [0] * w, [0] * w
        for x in range(w):
            av = cur[x]
            diff = rs[y][x] + tendency(top_row[x], av, nxt_row[x])
            sgn = (diff > 0) - (diff < 0)
            first = (2 * av + diff - sgn * (diff & 1)) >> 1
            first_row[x] = first
            second_row[x] = first - diff
        rows[2 * y] = first_row
        rows[2 * y + 1] = second_row
    if h1 > h2:
        rows[2 * h2] = list(a[h2])
    out.data = rows
    return out


def squeeze_inverse_step(channels, sid, begin, end):
    if sid < 2:
        offset = end + 1
    else:
        offset = len(channels) + begin - end - 1
    if begin > end or offset <= end:
        raise IllFormed("Squeeze: invalid channel range on inverse")
    for c in range(begin, end + 1):
        if offset >= len(channels):
            raise IllFormed("Squeeze: missing residual channel")
        avg, res = channels[c], channels[offset]
        out = inv_hsqueeze(avg, res) if sid & 1 else inv_vsqueeze(avg, res)
        if sid & 1:
            out.hshift -= 1
        else:
            out.vshift -= 1
        refresh_range(out)
        channels[c] = out
        del channels[offset]


def _inv_squeeze(img, t):
    for sid, begin, end in reversed(t.state["steps"]):
        squeeze_inverse_step(img.channels, sid, begin, end)


def upsample_row(row, target):
    n = len(row)
    out = []
    for x in range(n):
        b = row[x]
        a = row[x - 1] if x > 0 else b
        c = row[x + 1] if x + 1 < n else b
        out.append((a + 3 * b + 1) >> 2)
        out.append((3 * b + c + 2) >> 2)
    return out[:target]


def upsample_h(data, target):
    return [upsample_row(row, target) for row in data]


def upsample_v(data, target):
    if not data:
        return data
    cols = list(zip(*data))
    ups = [upsample_row(list(col), target) for col in cols]
    return [list(r) for r in zip(*ups)]


def _inv_subsample(img, t):
    for c, hs, vs, w0, h0 in reversed(t.state["record"]):
        ch = img.channels[c]
        data = ch.data
        for lvl in range(hs - 1, -1, -1):
            target = (w0 + (1 << lvl) - 1) >> lvl
            data = upsample_h(data, target)
        for lvl in range(vs - 1, -1, -1):
            target = (h0 + (1 << lvl) - 1) >> lvl
            if ch.width == 0 or not data:
                data = [[] for _ in range(target)]
            else:
                data = upsample_v(data, target)
        ch.data = data
        refresh_range(ch)
        ch.width, ch.height = w0, h0
        ch.hshift -= hs
        ch.vshift -= vs


def _inv_quantize(img, t):
    for ch in img.channels:
        if ch.q != 1:
            q = ch.q
            ch.data = [[v * q for v in row] for row in ch.data]
            ch.min, ch.max = sorted((ch.min * q, ch.max * q))


def _inv_adaptive_quantize(img, t):
    aq_shift = t.params[0]
    store = t.params[1] if len(t.params) == 2 else 0
    meta = img.channels[0]
    denominator = meta.q
    if denominator == 0:
        raise IllFormed("AdaptiveQuantize denominator is zero")
    first = img.nb_meta_channels
    last = len(img.channels) - 1
    if store:
        offset = first + (last - first + 1) // 2
        last = offset - 1
    else:
        offset = first
    for c in range(first, last + 1):
        ch = img.channels[c]
        if ch.hshift < 0 or ch.vshift < 0:
            continue
        if aq_shift < ch.hshift or aq_shift < ch.vshift:
            continue
        rem = img.channels[offset + c - first]
        q = rem.q
        if store and (rem.width != ch.width or rem.height != ch.height):
            raise IllFormed("remainder channel dimensions differ")
        hs, vs = ch.hshift, ch.vshift
        for y in range(ch.height):
            my = (y << vs) >> aq_shift
            if my >= meta.height:
                raise IllFormed("AdaptiveQuantize weight lookup outside the meta channel")
            mrow = meta.data[my]
            row = ch.data[y]
            rrow = rem.data[y] if store else None
            for x in range(ch.width):
                mx = (x << hs) >> aq_shift
                if mx >= meta.width:
                    raise IllFormed("AdaptiveQuantize weight lookup outside the meta channel")
                v = idiv(row[x] * q * mrow[mx], denominator)
                if store:
                    v += rrow[x]
                row[x] = v
        refresh_range(ch)
    if store:
        del img.channels[offset:]
    del img.channels[0]
    img.nb_meta_channels -= 1


def _inv_palette(img, t):
    begin, end, nb_colours = t.params
    pal = img.channels[0]
    first = begin + 1
    last = end + 1
    nb = last - first + 1
    if first >= len(img.channels):
        raise IllFormed("Palette index channel missing")
    if pal.width != nb_colours or pal.height != nb:
        raise IllFormed("palette meta channel has the wrong shape")
    src = img.channels[first]
    outs = [src.copy() for _ in range(nb)]
    base = src.min
    prows = pal.data
    for y in range(src.height):
        srow = src.data[y]
        orows = [o.data[y] for o in outs]
        for x in range(src.width):
            index = srow[x] - base
            if not 0 <= index < nb_colours:
                raise IllFormed(f"palette index {index} outside [0, {nb_colours})")
            for cc in range(nb):
                orows[cc][x] = prows[cc][index]
    for o in outs:
        refresh_range(o)
    img.channels[first:first + 1] = outs
    del img.channels[0]
    img.nb_meta_channels -= 1


def _inv_ycbcr(img, t):
    y_, cb, cr = _colour_channels(img, t)
    s = 1 << (img.bit_depth - 1)
    for ry, rb, rr in zip(y_.data, cb.data, cr.data):
        for x in range(len(ry)):
            yy, b, r_ = ry[x], rb[x] - s, rr[x] - s
            ry[x] = math.floor(yy + 1.402 * r_ + 0.5)
            rb[x] = math.floor(yy - 0.344136 * b - 0.714136 * r_ + 0.5)
            rr[x] = math.floor(yy + 1.772 * b + 0.5)
    for ch in (y_, cb, cr):
        refresh_range(ch)


def _inv_ycocg(img, t):
    c0, c1, c2 = _colour_channels(img, t)
    for ry, ro, rg in zip(c0.data, c1.data, c2.data):
        for x in range(len(ry)):
            y_, co, cg = ry[x], ro[x], rg[x]
            b = y_ + ((1 - cg) >> 1) - (co >> 1)
            g = y_ - ((-cg) >> 1)
            ry[x], ro[x], rg[x] = co + b, g, b
    for ch in (c0, c1, c2):
        refresh_range(ch)


def _inv_subtract_green(img, t):
    c0, c1, c2 = _colour_channels(img, t)
    depth = img.bit_depth
    s = 1 << (depth - 1)
    top = (1 << depth) - 1
    for rg, rr, rb in zip(c0.data, c1.data, c2.data):
        for x in range(len(rg)):
            g = min(max(rg[x], 0), top)
            rg[x], rr[x], rb[x] = rr[x] - s + g, g, rb[x] - s + g
    for ch in (c0, c1, c2):
        refresh_range(ch)


INVERTERS = {
    YCBCR: _inv_ycbcr, YCOCG: _inv_ycocg, SUBTRACT_GREEN: _inv_subtract_green,
    PALETTE: _inv_palette, SUBSAMPLE: _inv_subsample, SQUEEZE: _inv_squeeze,
    QUANTIZE: _inv_quantize, ADAPTIVE_QUANTIZE: _inv_adaptive_quantize,
}


def inverse_transforms(img: ModularImage) -> None:
    for t in reversed(img.transforms):
        INVERTERS[t.tr_id](img, t)
    img.transforms = []


# ---------------------------------------------------------------------------
# top level

def decode_modular(r: BitReader, shapes, xsize: int, ysize: int, bit_depth: int = 8) -> ModularImage:
    """Decode one modular sub-bitstream.

    ``shapes`` gives ``(width, height, hshift, vshift)`` for each channel
    before transforms; ``xsize``/``ysize`` are the image dimensions used by
    AdaptiveQuantize.
    """
    img = ModularImage([Channel(w, h, hs, vs) for w, h, hs, vs in shapes],
                       xsize=xsize, ysize=ysize, bit_depth=bit_depth)
    start = r.byte_pos
    img.max_extra_properties = read_varint(r)
    nb_transforms = read_varint(r)
    if nb_transforms * 8 > r.remaining_bits():
        raise IllFormed("transform count exceeds the stream", start)
    transforms = [read_transform(r) for _ in range(nb_transforms)]
    shape_forward(img, transforms)
    has_quant = any(t.tr_id in (QUANTIZE, ADAPTIVE_QUANTIZE) for t in transforms)
    for c, ch in enumerate(img.channels):
        if ch.width == 0 or ch.height == 0:
            ch.data = [[] for _ in range(ch.height)]
            continue
        hdr = read_channel_header(r, has_quant)
        decode_channel(r, img, c, hdr)
    inverse_transforms(img)
    return img
