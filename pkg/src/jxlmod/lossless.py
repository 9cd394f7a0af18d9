"""Lossless mode: per-channel palettes, weighted-predictor sample decoding
and the 30 colour transforms."""
from __future__ import annotations

from dataclasses import dataclass

from .bitio import BitReader
from .entropy import AnsDecoder, decode_clustered_distributions
from .errors import IllFormed
from .predict import WeightedPredictor

R, G, B = 0, 1, 2

# Each row is a list of assignments (target, sign, term) applied in order:
#   v[target] = (sign * v[target] + term(v) + C) & mask
# where ``term`` sees the values as already updated by earlier assignments.
_T = {
    1: [(G, 1, lambda v: v[R])],
    2: [(B, 1, lambda v: v[R])],
    3: [(G, 1, lambda v: v[R]), (B, 1, lambda v: v[R])],
    4: [(G, 1, lambda v: v[B])],
    5: [(B, -1, lambda v: v[G])],
    6: [(G, 1, lambda v: v[R]), (B, 1, lambda v: (v[R] + v[G]) >> 1)],
    7: [(B, 1, lambda v: v[R]), (G, 1, lambda v: (v[R] + v[B]) >> 1)],
    8: [(B, 1, lambda v: (v[R] + v[G]) >> 1)],
    9: [(G, 1, lambda v: (v[R] + v[B]) >> 1)],
    11: [(R, 1, lambda v: v[G])],
    12: [(B, 1, lambda v: v[G])],
    13: [(R, 1, lambda v: v[G]), (B, 1, lambda v: v[G])],
    14: [(R, 1, lambda v: v[B])],
    15: [(B, -1, lambda v: v[R])],
    16: [(R, 1, lambda v: v[G]), (B, 1, lambda v: (v[G] + v[R]) >> 1)],
    17: [(B, 1, lambda v: v[G]), (R, 1, lambda v: (v[G] + v[B]) >> 1)],
    18: [(B, 1, lambda v: (v[R] + v[G]) >> 1)],
    19: [(R, 1, lambda v: (v[B] + v[G]) >> 1)],
    23: [(R, 1, lambda v: v[B]), (G, 1, lambda v: v[B])],
    25: [(G, -1, lambda v: v[R])],
    26: [(R, 1, lambda v: v[B]), (G, 1, lambda v: (v[B] + v[R]) >> 1)],
    27: [(G, 1, lambda v: v[B]), (R, 1, lambda v: (v[B] + v[G]) >> 1)],
    28: [(G, 1, lambda v: (v[R] + v[B]) >> 1)],
    29: [(R, 1, lambda v: (v[G] + v[B]) >> 1)],
}
ALIASES = {10: 0, 20: 0, 21: 14, 22: 4, 24: 11}
NUM_COLOUR_TRANSFORMS = 30

COLOUR_TRANSFORMS = [_T.get(ALIASES.get(t, t), []) for t in range(NUM_COLOUR_TRANSFORMS)]
# AFFECTED[t][c]: channel c may change under transform t
AFFECTED = [tuple(any(op[0] == c for op in ops) for c in range(3)) for ops in COLOUR_TRANSFORMS]


def apply_colour_transform(planes, t: int, bit_depth: int) -> None:
    """In-place decoder-side colour transform of three flat planes."""
    if not 0 <= t < NUM_COLOUR_TRANSFORMS:
        raise IllFormed(f"colour transform {t} not in [0, 30)")
    ops = COLOUR_TRANSFORMS[t]
    if not ops:
        return
    c = 1 << (bit_depth - 1)
    mask = (1 << bit_depth) - 1
    for i in range(len(planes[0])):
        v = [planes[0][i], planes[1][i], planes[2][i]]
        for tgt, sign, term in ops:
            v[tgt] = (sign * v[tgt] + term(v) + c) & mask
        planes[0][i], planes[1][i], planes[2][i] = v


def invert_colour_transform(planes, t: int, bit_depth: int) -> None:
    """In-place inverse of :func:`apply_colour_transform` (encoder side)."""
    ops = COLOUR_TRANSFORMS[t]
    if not ops:
        return
    c = 1 << (bit_depth - 1)
    mask = (1 << bit_depth) - 1
    for i in range(len(planes[0])):
        v = [planes[0][i], planes[1][i], planes[2][i]]
        for tgt, sign, term in reversed(ops):
            v[tgt] = (sign * (v[tgt] - term(v) - c)) & mask
        planes[0][i], planes[1][i], planes[2][i] = v


# ---------------------------------------------------------------------------
# per-channel palettes

@dataclass
class ChannelPalette:
    values: list          # sample value for each compacted index

    @property
    def size(self) -> int:
        return len(self.values)

    @classmethod
    def from_bits(cls, bits) -> "ChannelPalette":
        return cls([i for i, b in enumerate(bits) if b])


def _read_bounded_bits(r: BitReader, total: int, n_read_1: int) -> list:
    n_read_0 = total - n_read_1
    bits = []
    ones = zeros = 0
    while len(bits) < total:
        if ones == n_read_1:
            bits += [0] * (total - len(bits))
            break
        if zeros == n_read_0:
            bits += [1] * (total - len(bits))
            break
        b = r.u(1)
        bits.append(b)
        if b:
            ones += 1
        else:
            zeros += 1
    r.pu0()
    return bits


SMT0 = (
    0x2415, 0x1d7d, 0x1f71, 0x46fe, 0x24f1, 0x3f15, 0x4a65, 0x6236,
    0x242c, 0x34ce, 0x4872, 0x5cf6, 0x4857, 0x64fe, 0x6745, 0x7986,
    0x24ad, 0x343c, 0x499a, 0x5fb5, 0x49a9, 0x61e8, 0x6e1f, 0x78ae,
    0x4ba3, 0x6332, 0x6c8b, 0x7ccd, 0x6819, 0x8247, 0x83f2, 0x8cce,
    0x247e, 0x3277, 0x391f, 0x5ea3, 0x4694, 0x5168, 0x67e3, 0x784b,
    0x474b, 0x5072, 0x666b, 0x6cb3, 0x6514, 0x7ba6, 0x83e4, 0x8cef,
    0x48bf, 0x6363, 0x6677, 0x7b76, 0x67f9, 0x7e0d, 0x826f, 0x8a52,
    0x659f, 0x7d6f, 0x7f8e, 0x8f66, 0x7ed6, 0x9169, 0x9269, 0x90e4,
)
M32 = 0xFFFFFFFF


def palette16_split(x1: int, x2: int, pr: int) -> int:
    d = (x2 - x1) & M32
    return (x1 + (d >> 16) * pr + (((d & 0xFFFF) * pr) >> 16)) & M32


def palette16_adapt(p0: int, v: int) -> int:
    return p0 + ((((v << 27) - p0) * 5) >> 7)


def decode_palette16(r: BitReader, n_read_1: int, ps: int) -> ChannelPalette:
    """Context-mixing decoder for a 16-bit membership set.

    ``ps`` bytes are reserved for the coded data; reads past them yield
    0xFF and any bytes left unread are skipped afterwards.
    """
    pos = 0

    def next_byte():
        nonlocal pos
        b = 0xFF if pos >= ps else r.u(8)
        pos += 1
        return b

    x1, x2, xr = 0, M32, 0
    for _ in range(4):
        xr = ((xr << 8) + next_byte()) & M32
    smt = [s << 11 for s in SMT0]
    ctx = 0
    palette = [0] * 0x10000
    sumv = 0
    x = 0
    n_read_0 = 0x10000 - n_read_1
    while x < 0x10000:
        # palette16_split / palette16_adapt, inlined for speed
        pr = smt[ctx] >> 11
        d = (x2 - x1) & M32
        xmid = (x1 + (d >> 16) * pr + (((d & 0xFFFF) * pr) >> 16)) & M32
        if xr <= xmid:
            x2 = xmid
            v = 1
        else:
            x1 = (xmid + 1) & M32
            v = 0
        while ((x1 ^ x2) & 0xFF000000) == 0:
            xr = ((xr << 8) + next_byte()) & M32
            x1 = (x1 << 8) & M32
            x2 = ((x2 << 8) + 255) & M32
        p0 = smt[ctx]
        smt[ctx] = p0 + ((((v << 27) - p0) * 5) >> 7)
        ctx = (ctx * 2 + v) & 0x3F
        palette[sumv] = x
        x += 1
        sumv += v
        if sumv == n_read_1:
            break
        if x - sumv == n_read_0:
            while x < 0x10000:
                palette[sumv] = x
                sumv += 1
                x += 1
    if sumv != n_read_1:
        raise r.error("16-bit palette does not hold the signalled number of values")
    if pos < ps:
        r.skip(8 * (ps - pos))
    return ChannelPalette(palette[:sumv])


def decode_palettes(r: BitReader, greyscale: bool, bits16: bool, total_pixels: int):
    """Per-channel palettes of the whole image; ``None`` marks an absent one."""
    nch = 1 if greyscale else 3
    none = [None] * nch
    if total_pixels < 257:
        return none
    if r.u(8) == 0:
        return none
    if not bits16 and greyscale:
        pal = ChannelPalette.from_bits([r.u(1) for _ in range(256)])
        if pal.size == 0:
            raise r.error("empty per-channel palette")
        return [pal]
    total = 1 << (16 if bits16 else 8)
    present = [r.u(1) for _ in range(nch)]
    r.pu0()
    nbits = 16 if bits16 else 8
    n_read_1 = [r.u(nbits) + 1 for _ in range(nch)]
    out = []
    for c in range(nch):
        if not present[c]:
            out.append(None)
            continue
        if bits16:
            method = r.u(1)
            ps = r.u(15)
            if method:
                out.append(decode_palette16(r, n_read_1[c], ps))
                continue
        out.append(ChannelPalette.from_bits(_read_bounded_bits(r, total, n_read_1[c])))
    return out


def expand_palette(plane, pal: ChannelPalette) -> None:
    values = pal.values
    n = len(values)
    for i, v in enumerate(plane):
        if v >= n:
            raise IllFormed(f"sample {v} not below the palette size {n}")
        plane[i] = values[v]


# ---------------------------------------------------------------------------
# group decoding

@dataclass
class LosslessParams:
    bits16: bool
    area: int

    @property
    def max_err_shift(self) -> int:
        a = self.area
        if self.bits16:
            return 0 if a > 25600 else 1 if a > 12800 else 2 if a > 2800 else 3 if a > 512 else 4
        return 0 if a > 25600 else 1 if a > 12800 else 2 if a > 4000 else 3 if a > 400 else 4

    @property
    def max_err_round(self) -> int:
        return (1 << self.max_err_shift) - 1 if self.bits16 else 0

    @property
    def num_contexts(self) -> int:
        if self.bits16:
            return ((18 - 1 + self.max_err_round) >> self.max_err_shift) + 1
        return ((17 - 1) >> self.max_err_shift) + 1


def split_prediction_modes(p: int, greyscale: bool):
    modes = [p] if greyscale else [p & 3, (p >> 2) & 3, p >> 4]
    for m in modes:
        if m > 2:
            raise IllFormed(f"prediction mode byte {p} holds an unknown mode")
    return modes


def channel_max_values(greyscale, bits16, transform, palettes):
    full = 0xFFFF if bits16 else 0xFF
    out = []
    for c, pal in enumerate(palettes):
        if pal is not None and (greyscale or not AFFECTED[transform][c]):
            out.append(pal.size - 1)
        else:
            out.append(full)
    return out


def decode_group(r: BitReader, greyscale: bool, bits16: bool, xsize: int, ysize: int, palettes):
    """Decode one PassGroup and return flat planes with palettes expanded."""
    nch = 1 if greyscale else 3
    transform = 0
    if not greyscale:
        transform = r.u(8)
        if transform >= NUM_COLOUR_TRANSFORMS:
            raise r.error(f"colour transform {transform} not in [0, 30)")
    modes = [0] * nch
    if not bits16:
        modes = split_prediction_modes(r.u(8), greyscale)
    params = LosslessParams(bits16, xsize * ysize)
    shift, rnd, nc = params.max_err_shift, params.max_err_round, params.num_contexts
    dists = decode_clustered_distributions(r, nc * nch).tables()
    dec = AnsDecoder(r)
    max_values = channel_max_values(greyscale, bits16, transform, palettes)
    planes = []
    for ci in range(nch):
        wp = WeightedPredictor(xsize, ysize, bits16, max_values[ci], modes[ci])
        base = nc * ci
        plane = []
        for y in range(ysize):
            for x in range(xsize):
                pred, max_error, preds = wp.predict(x, y)
                d = dec.read_hybrid_uint(dists[((max_error + rnd) >> shift) + base])
                v = wp.restore(pred, d)
                wp.update(x, y, pred, preds, d, v)
                plane.append(v)
        planes.append(plane)
    dec.check_final()
    if not greyscale:
        apply_colour_transform(planes, transform, 16 if bits16 else 8)
    for plane, pal in zip(planes, palettes):
        if pal is not None:
            expand_palette(plane, pal)
    return planes
