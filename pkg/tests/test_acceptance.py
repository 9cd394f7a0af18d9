"""Acceptance criteria 1-10.

Each test prints one ``criterion N: PASS|FAIL`` line.  The module can also be
run directly: ``python3 tests/test_acceptance.py``.
"""
import hashlib
import random
import subprocess
import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from jxlmod import brotli_io, decode_codestream  # noqa: E402
from jxlmod.bitio import (  # noqa: E402
    BitReader, BitWriter, Bits, Val, read_gl, read_sl, read_u32, read_u64, read_u8, write_u8,
    write_varint,
)
from jxlmod.entropy import (  # noqa: E402
    AbracDecoder, AliasTable, AnsDecoder, SansDecoder, decode_clustered_distributions,
    decode_hybrid_uint, init_begabrac, sans_decode_distribution,
)
from jxlmod.errors import IllFormed  # noqa: E402
from jxlmod.headers import (  # noqa: E402
    Extensions, FrameEncoding, LoopFilter, LosslessMode,
)
from jxlmod.icc import decode_icc_stream, predict_header_byte  # noqa: E402
from jxlmod.lossless import (  # noqa: E402
    AFFECTED, ALIASES, apply_colour_transform, decode_group, decode_palettes,
)
from jxlmod.modular import (  # noqa: E402
    ADAPTIVE_QUANTIZE, PALETTE, QUANTIZE, SQUEEZE, SUBSAMPLE, SUBTRACT_GREEN, YCBCR, YCOCG,
    Channel, ModularImage, decode_modular, inverse_transforms, squeeze_inverse_step,
    squeeze_steps, tendency,
)
from jxlmod.predict import WeightedPredictor, error2weight16  # noqa: E402
from jxlmod.refcodec.codestream import FrameSpec, ImageSpec, build_metadata, encode_image  # noqa: E402
from jxlmod.refcodec.entropy import (  # noqa: E402
    AbracEncoder, AnsStreamBuilder, Leaf, Split, hybrid_uint_split, normalize_counts, sans_encode,
    sans_encode_distribution, sans_quantize, write_ans_ops,
)
from jxlmod.refcodec.icc import encode_icc_stream  # noqa: E402
from jxlmod.refcodec.lossless import build_palette, encode_group, encode_palettes  # noqa: E402
from jxlmod.refcodec.modular import (  # noqa: E402
    ChannelPlan, encode_modular, forward_squeeze_step, forward_transforms,
)

from streams import frame_stream, modular_frame, pack, msb_fields  # noqa: E402

HERE = Path(__file__).parent
ROOT = HERE.parent


def _report(n, ok, detail, elapsed, limit=None):
    budget = f" / {limit:g} s" if limit else ""
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail}; {elapsed:.2f} s{budget})"
    return line


def run_criterion(n, body, limit=None):
    """Run ``body`` (returns a detail string), print the outcome line, return (ok, line)."""
    t0 = time.perf_counter()
    try:
        detail = body()
        ok = True
    except Exception as e:  # a failing criterion reports why instead of crashing the run
        detail = f"{type(e).__name__}: {e}"
        ok = False
    elapsed = time.perf_counter() - t0
    if ok and limit is not None and elapsed >= limit:
        ok = False
        detail += f"; over the time budget"
    return ok, _report(n, ok, detail, elapsed, limit)


def check(cond, msg):
    if not cond:
        raise AssertionError(msg)


# ---------------------------------------------------------------------------
# 1. field codecs

SL4 = [([0], 0x0), ([1, 1, 0], 0x1), ([1, 0, 1, 1, 0], 0x2), ([1, 1, 1, 1, 0], 0x3),
       ([1, 0, 1, 0, 1, 1, 0], 0x4), ([1, 0, 1, 0, 1, 0, 1], 0x8), ([1, 1, 1, 1, 1, 1, 1], 0xF)]
GL43 = [([0], [1], 0x0), ([1, 1, 1, 0, 1, 0], [1, 4, 1], 0xD),
        ([1, 1, 1, 0, 1, 1, 1, 0, 1, 0, 0], [1, 4, 1, 4, 1], 0xAD),
        ([1, 1, 1, 0, 1, 1, 1, 0, 1, 0, 1, 1, 0, 1, 1], [1, 4, 1, 4, 1, 4], 0xBAD)]
U8 = [([0], [1], 0x00), ([1, 0, 0, 0], [1, 3], 0x01), ([1, 0, 0, 1, 0], [1, 3, 1], 0x02),
      ([1, 0, 0, 1, 1], [1, 3, 1], 0x03), ([1, 1, 1, 0, 0, 0, 0, 0, 1, 0], [1, 3, 6], 0x42),
      ([1] * 11, [1, 3, 7], 0xFF)]


def criterion_1():
    n = 0
    r = BitReader(msb_fields([1] * 73))
    check(read_u64(r) == 2 ** 64 - 1 and r.bit_pos == 73, "U64 73 ones")
    n += 1
    for seq, want in SL4:
        r = BitReader(msb_fields(seq))
        check(read_sl(r, 4) == want and r.bit_pos == len(seq), f"SL(4) {seq}")
        n += 1
    for seq, widths, want in GL43:
        r = BitReader(msb_fields(seq, widths))
        check(read_gl(r, 4, 3) == want and r.bit_pos == len(seq), f"GL(4,3) {seq}")
        n += 1
    for seq, widths, want in U8:
        r = BitReader(msb_fields(seq, widths))
        check(read_u8(r) == want and r.bit_pos == len(seq), f"U8 {seq}")
        n += 1
    d = (Val(8), Val(16), Val(32), Bits(6))
    check(read_u32(BitReader(msb_fields([1, 0], [2])), d) == 32, "U32 example 1")
    d = (Bits(2), Bits(4), Bits(6), Bits(8))
    check(read_u32(BitReader(msb_fields([0, 1, 0, 1, 1, 1], [2, 4])), d) == 7, "U32 example 2")
    n += 2
    return f"{n} vectors"


# ---------------------------------------------------------------------------
# 2. entropy duality

def _random_counts(rng):
    a = rng.randint(1, 256)
    h = [rng.choice([0, 0, 1, rng.randint(1, 1000)]) for _ in range(a)]
    if not any(h):
        h[rng.randrange(a)] = 1
    return normalize_counts(h)


def criterion_2(n=10_000):
    rng = random.Random(2)
    # ANS: every stream gets its own symbols, over tables drawn from a 1000-entry pool
    pool = [AliasTable(_random_counts(rng)) for _ in range(1000)]
    for _ in range(n):
        t = rng.choice(pool)
        support = [s for s, c in enumerate(t.counts) if c]
        syms = [rng.choice(support) for _ in range(rng.randint(0, 24))]
        w = BitWriter()
        write_ans_ops(w, [(t, s) for s in syms])
        data = w.getvalue()
        r = BitReader(data)
        dec = AnsDecoder(r)
        check([dec.read_symbol(t) for _ in syms] == syms, "ANS symbols")
        dec.check_final()
        check(r.remaining_bits() == 0, "ANS stream not fully consumed")
    # sANS: fresh distribution per stream
    for _ in range(n):
        hist = [rng.choice([0, 0, 1, 3, 10, 50]) for _ in range(18)]
        if not any(hist):
            hist[rng.randrange(18)] = 1
        counts = sans_quantize(hist)
        w = BitWriter()
        sans_encode_distribution(w, counts)
        d = sans_decode_distribution(BitReader(w.getvalue()))
        check(d.counts == counts, "sANS distribution")
        support = [s for s, c in enumerate(counts) if c]
        syms = [rng.choice(support) for _ in range(rng.randint(0, 24))]
        r = BitReader(sans_encode(syms, d))
        dec = SansDecoder(r)
        check([dec.read_symbol(d) for _ in syms] == syms, "sANS symbols")
        dec.check_final()
        check(r.remaining_bits() == 0, "sANS stream not fully consumed")
    # ABRAC: fixed and adaptive chances
    for _ in range(n):
        k = rng.randint(1, 24)
        ops = [(rng.randrange(2), rng.randint(1, 4095), rng.random() < 0.5) for _ in range(k)]
        enc = AbracEncoder()
        ch = [2048] * 4
        for i, (bit, c, adaptive) in enumerate(ops):
            if adaptive:
                enc.put_adaptive_bit(ch, i & 3, bit)
            else:
                enc.put_bit(c, bit)
        data = enc.finish()
        dec = AbracDecoder(BitReader(data))
        ch = [2048] * 4
        out = [dec.get_adaptive_bit(ch, i & 3) if a else dec.get_bit(c)
               for i, (_, c, a) in enumerate(ops)]
        check(out == [b for b, _, _ in ops], "ABRAC bits")
    # BEGABRAC: random bounds, values inside them
    for _ in range(n):
        enc = AbracEncoder()
        ctx = init_begabrac(rng.choice([4, 1024, 2048, 4088]))
        init = ctx[0]
        vals = []
        for _ in range(rng.randint(1, 12)):
            lo = rng.randint(-(1 << rng.randint(0, 20)), 40)
            hi = lo + rng.randint(0, 1 << rng.randint(0, 20))
            v = rng.randint(lo, hi)
            enc.put_begabrac(ctx, lo, hi, v)
            vals.append((lo, hi, v))
        dec = AbracDecoder(BitReader(enc.finish()))
        ctx = init_begabrac(init)
        check([dec.read_begabrac(ctx, lo, hi) for lo, hi, _ in vals] == [v for *_, v in vals],
              "BEGABRAC values")
    # hybrid uint: every value through token + raw bits, and through ANS streams
    values = [rng.choice([rng.randrange(16), rng.randrange(1 << rng.randint(4, 32))])
              for _ in range(n)]
    for v in values:
        token, nb, extra = hybrid_uint_split(v)
        check(decode_hybrid_uint(token, BitReader(pack((nb, extra)))) == v, "hybrid split")
    streams = 0
    for i in range(0, n, 50):
        chunk = values[i:i + 50]
        ctxs = [rng.randrange(3) for _ in chunk]
        b = AnsStreamBuilder(3)
        for c, v in zip(ctxs, chunk):
            b.hybrid(c, v)
        w = BitWriter()
        b.write(w)
        r = BitReader(w.getvalue())
        tables = decode_clustered_distributions(r, 3).tables()
        dec = AnsDecoder(r)
        check([dec.read_hybrid_uint(tables[c]) for c in ctxs] == chunk, "hybrid stream")
        dec.check_final()
        check(r.remaining_bits() < 8, "hybrid stream not fully consumed")
        streams += 1
    return (f"{n} ANS, {n} sANS, {n} ABRAC, {n} BEGABRAC streams; {n} hybrid values "
            f"({streams} ANS streams); final state checked on every ANS/sANS stream")


# ---------------------------------------------------------------------------
# 3. alias oracle

def criterion_3(n=1000):
    rng = random.Random(3)
    for _ in range(n):
        counts = _random_counts(rng)
        full = counts + [0] * (256 - len(counts))
        t = AliasTable(counts)
        tally = [0] * 256
        offs = [[] for _ in range(256)]
        for s, o in zip(t.symbols, t.offsets):
            tally[s] += 1
            offs[s].append(o)
        check(tally == full, "symbol multiset differs from the distribution")
        check(all(sorted(offs[s]) == list(range(full[s])) for s in range(256)),
              "offsets are not a permutation")
    return f"{n} distributions"


# ---------------------------------------------------------------------------
# 4. squeeze

def criterion_4(n=1000):
    rng = random.Random(4)
    parities = set()
    for i in range(n):
        w = 2 * rng.randint(0, 12) + (i & 1) or 2
        h = 2 * rng.randint(0, 12) + ((i >> 1) & 1) or 2
        nch = rng.randint(1, 3)
        top = rng.choice([1, 255, 65535])
        lo = -top if rng.random() < 0.3 else 0
        chans = [Channel(w, h, data=[[rng.randint(lo, top) for _ in range(w)] for _ in range(h)])
                 for _ in range(nch)]
        orig = [c.data for c in chans]
        img = ModularImage([c.copy() for c in chans], xsize=w, ysize=h)
        if i % 3 == 0:
            steps = squeeze_steps(img, [])
        else:
            sid = rng.choice([0, 1, 2, 3])
            steps = [(sid, 0, nch - 1)]
        for sid, b, e in steps:
            forward_squeeze_step(img.channels, sid, b, e)
        for sid, b, e in reversed(steps):
            squeeze_inverse_step(img.channels, sid, b, e)
        check([c.data for c in img.channels] == orig, f"squeeze {w}x{h} {steps}")
        parities.add((w & 1, h & 1))
    check(parities == {(0, 0), (0, 1), (1, 0), (1, 1)}, "parity coverage")
    for a in (-9, 0, 1, 77, 65535):
        check(tendency(a, a, a) == 0, "tendency(A,A,A)")
    check(tendency(4, 2, 0) == 1, "tendency(4,2,0)")
    check(tendency(0, 5, 0) == 0, "tendency(0,5,0)")
    return f"{n} channels, all four parities; tendency vectors"


# ---------------------------------------------------------------------------
# 5. modular round trip

CYCLE = [None, SUBSAMPLE, QUANTIZE, ADAPTIVE_QUANTIZE, SQUEEZE, PALETTE, YCBCR, YCOCG,
         SUBTRACT_GREEN]
COLOUR = {YCBCR, YCOCG, SUBTRACT_GREEN}


def _split_tree(n, ranges):
    p = n + 5
    lo, hi = ranges[p]
    return Split(p, (lo + hi) // 2, Leaf(), Leaf(zc=1, sign=4)) if hi > lo else Leaf()


def _dim(rng, i):
    if i % 50 == 0:
        return 64
    if i % 50 == 1:
        return 1
    return max(1, min(64, int(2 ** rng.uniform(0, 6))))


def _modular_case(rng, i):
    backend = i % 3
    tr = CYCLE[(i // 3) % len(CYCLE)]
    depth = rng.choice([8, 16])
    top = (1 << depth) - 1
    nch = rng.randint(3, 4) if tr in COLOUR else rng.randint(1, 4)
    w, h = _dim(rng, i), _dim(rng, i + 7 * (i % 50 > 1))
    q = [1] * nch
    if tr == PALETTE:
        colours = [[rng.randint(0, top) for _ in range(nch)] for _ in range(rng.randint(1, 12))]
        pick = [[rng.choice(colours) for _ in range(w)] for _ in range(h)]
        data = [[[px[c] for px in row] for row in pick] for c in range(nch)]
    else:
        if tr == QUANTIZE:
            q = [rng.randint(1, 5) for _ in range(nch)]
        smooth = rng.random() < 0.5
        data = []
        for c in range(nch):
            base = rng.randint(0, top)
            rows = []
            for y in range(h):
                if smooth:
                    row = [min(top, max(0, base + 3 * x - 2 * y + rng.randint(-4, 4))) for x in range(w)]
                else:
                    row = [rng.randint(0, top) for _ in range(w)]
                rows.append([v - v % q[c] for v in row])
            data.append(rows)
    transforms, exact = [], True
    if tr == SUBSAMPLE:
        if nch >= 3 and rng.random() < 0.5:
            transforms = [(SUBSAMPLE, [rng.randrange(4)])]
        else:
            transforms = [(SUBSAMPLE, [0, nch - 1, rng.randint(0, 2), rng.randint(0, 2)])]
        exact = False
    elif tr == QUANTIZE:
        transforms = [(QUANTIZE, [])]
    elif tr == ADAPTIVE_QUANTIZE:
        shift, store = rng.randint(0, 3), rng.randrange(2)
        mw, mh = ((w - 1) >> shift) + 1, ((h - 1) >> shift) + 1
        weights = [[rng.randint(1, 4) for _ in range(mw)] for _ in range(mh)]
        transforms = [(ADAPTIVE_QUANTIZE, [shift, store, weights])]
        exact = bool(store)
    elif tr == SQUEEZE:
        transforms = [(SQUEEZE, [])]
    elif tr == PALETTE:
        b = rng.randint(0, nch - 1)
        transforms = [(PALETTE, [b, rng.randint(b, nch - 1)])]
    elif tr == YCBCR:
        transforms = [(YCBCR, [])]
        exact = False
    elif tr is not None:
        transforms = [(tr, [])]
    img = ModularImage([Channel(w, h, q=q[c], data=[list(r) for r in data[c]]) for c in range(nch)],
                       xsize=w, ysize=h, bit_depth=depth)
    plan = ChannelPlan(rng.randrange(5), backend, _split_tree if rng.random() < 0.5 else None)
    mep = rng.choice([0, 4, 8])
    shapes = [(w, h, 0, 0)] * nch
    sig = forward_transforms(img, transforms)
    bw = BitWriter()
    shaped = encode_modular(bw, shapes, w, h, sig, img.channels, plan, mep, depth)
    out = decode_modular(BitReader(bw.getvalue()), shapes, w, h, depth)
    got = [c.data for c in out.channels]
    if exact:
        want = data
    else:
        # lossy transforms: the encoder's own reconstruction is the reference
        inverse_transforms(shaped)
        want = [c.data for c in shaped.channels]
        check([(len(c[0]) if c else 0, len(c)) for c in want] == [(w, h)] * nch,
              "reference has the wrong shape")
    check(got == want, f"case {i}: backend {backend}, transform {tr}, {w}x{h}x{nch}@{depth}")
    return backend, tr


def criterion_5(n=500):
    rng = random.Random(5)
    seen = set()
    for i in range(n):
        seen.add(_modular_case(rng, i))
    check(len(seen) == 3 * len(CYCLE), "not every backend x transform pair ran")
    return f"{n} cases, {len(seen)} backend x transform pairs"


# ---------------------------------------------------------------------------
# 6. lossless

def _lossless_case(rng, grey, bits16, t):
    nch = 1 if grey else 3
    top = 0xFFFF if bits16 else 0xFF
    pals, planes = [], []
    for _ in range(nch):
        if rng.random() < 0.5:
            vals = rng.sample(range(top + 1), rng.randint(1, 40))
            plane = [rng.choice(vals) for _ in range(1024)]
            pals.append(build_palette(plane, bits16))
        else:
            plane = [rng.randrange(top + 1) for _ in range(1024)]
            pals.append(None)
        planes.append(plane)
    head = BitWriter()
    encode_palettes(head, pals, grey, bits16, 1024)
    body = BitWriter()
    modes = [rng.randrange(3) for _ in range(nch)]
    encode_group(body, planes, grey, bits16, 32, 32, pals, 0 if grey else t, modes)
    return planes, head.getvalue(), body.getvalue()


def _decode_lossless(head, body, grey, bits16):
    r = BitReader(head + body)
    pals = decode_palettes(r, grey, bits16, 1024)
    planes = decode_group(r, grey, bits16, 32, 32, pals)
    check(r.remaining_bits() < 8, "group not fully consumed")
    return planes


def criterion_6():
    rng = random.Random(6)
    cases = 0
    for grey in (False, True):
        for bits16 in (False, True):
            for t in range(30):
                planes, head, body = _lossless_case(rng, grey, bits16, t)
                check(_decode_lossless(head, body, grey, bits16) == planes,
                      f"grey={grey} bits16={bits16} t={t}")
                cases += 1
    # the same residual stream read under an aliased row and under its referent
    for t, ref in ALIASES.items():
        for bits16 in (False, True):
            planes, head, body = _lossless_case(rng, False, bits16, ref)
            a = _decode_lossless(head, body, False, bits16)
            b = _decode_lossless(head, bytes([t]) + body[1:], False, bits16)
            check(a == b == planes, f"aliased row {t} differs from {ref}")
        work = [[rng.randrange(256) for _ in range(64)] for _ in range(3)]
        x, y = [list(p) for p in work], [list(p) for p in work]
        apply_colour_transform(x, t, 8)
        apply_colour_transform(y, ref, 8)
        check(x == y, f"row {t} != row {ref}")
    return f"{cases} mode x transform cases, aliases {sorted(ALIASES)} match their referents"


# ---------------------------------------------------------------------------
# 7. weighted predictor constants

def criterion_7(monkeypatch):
    firsts = []
    real = WeightedPredictor.predict

    def spy(self, x, y):
        out = real(self, x, y)
        if not getattr(self, "_seen", False):
            self._seen = True
            firsts.append((self.bits16, (x, y), out[0], out[1]))
        return out
    monkeypatch.setattr(WeightedPredictor, "predict", spy)
    rng = random.Random(7)
    streams = 0
    for grey in (False, True):
        for bits16 in (False, True):
            for k in range(4):
                w, h = rng.randint(1, 20), rng.randint(1, 20)
                top = 0xFFFF if bits16 else 0xFF
                nch = 1 if grey else 3
                planes = [[[rng.randint(0, top) for _ in range(w)] for _ in range(h)]
                          for _ in range(nch)]
                spec = ImageSpec(w, h, grey=grey, bits=16 if bits16 else 8)
                modes = [k % 3] * nch
                data = encode_image(spec, [FrameSpec(planes, encoding="lossless", modes=modes,
                                                     colour_transform=0 if grey else k)])
                firsts.clear()
                cs = decode_codestream(data)
                check([p.rows for p in cs.frames[0].planes] == planes, "lossless decode")
                check(len(firsts) == nch, "one predictor per channel")
                for b16, xy, pred, me in firsts:
                    check(xy == (0, 0), "first pixel is not (0, 0)")
                    want = (3584, 17) if b16 else (27 << 3, 14)
                    check((pred, me) == want, f"first pixel gave {(pred, me)}, want {want}")
                streams += 1
    check(error2weight16(0) == 0xFFFF, "error2weight(0) in 16-bit mode")
    return f"{streams} streams; 8-bit (216, 14), 16-bit (3584, 17), error2weight(0) = 0xffff"


# ---------------------------------------------------------------------------
# 8. ICC

def _fixture_profile():
    raw = (HERE / "fixtures" / "app2_icc_template.bin").read_bytes()
    check(hashlib.md5(raw).hexdigest().upper() == "C02BFC5B3730AC5B6E26C943ACC0F651",
          "fixture MD5")
    return raw[17:]


def criterion_8():
    from PIL import ImageCms
    profiles = {"fixture": _fixture_profile()}
    for name in ("sRGB", "LAB", "XYZ"):
        profiles[name] = ImageCms.ImageCmsProfile(ImageCms.createProfile(name)).tobytes()
    for name, prof in profiles.items():
        check(decode_icc_stream(encode_icc_stream(prof)) == prof, f"{name} minimal encoding")
        # and embedded in a codestream
        p = [[[0, 1], [2, 3]] for _ in range(3)]
        cs = decode_codestream(encode_image(ImageSpec(2, 2, icc=prof), [FrameSpec(p)]))
        check(cs.icc == prof, f"{name} in a codestream")
    vectors = {8: 4, 70: 246, 71: 214, 73: 1, 78: 211, 79: 45}
    for i, want in vectors.items():
        check(predict_header_byte(i, bytearray(128), 1000) == want, f"header byte {i}")
    return f"{len(profiles)} profiles ({', '.join(profiles)}), {len(vectors)} header vectors"


# ---------------------------------------------------------------------------
# 9. ill-formed corpus

SENTINEL = 0x3C01  # F16 bits of 1 + 2**-10, unused by any default


class _PatchingWriter(BitWriter):
    """Replaces 16-bit writes of SENTINEL with ``bad``."""

    def __init__(self, bad):
        super().__init__()
        self.bad = bad

    def write(self, n, v):
        if n == 16 and v == SENTINEL:
            v = self.bad
        super().write(n, v)


def _bad_f16_stream(field, bad):
    from jxlmod.headers import FrameContext, FrameHeader, ImageMetadata, SizeHeader, encode_signature
    sentinel = 1 + 2 ** -10
    lf = LoopFilter(all_default=False, gab_custom=True, epf_weight_custom=True, epf_scale_custom=True,
                    epf_sharp_custom=True, epf_sigma_custom=True, qco=True, qco_custom=True,
                    extensions=Extensions())
    if field.startswith("epf_sharp_lut"):
        lut = list(lf.epf_sharp_lut)
        lut[int(field[-1])] = sentinel
        lf.epf_sharp_lut = lut
    else:
        setattr(lf, field, sentinel)
    w = _PatchingWriter(bad)
    encode_signature(w)
    size = SizeHeader.for_dims(8, 8)
    size.encode(w)
    meta = ImageMetadata()
    meta.encode(w, FrameContext(size, None))
    w.pu0()
    FrameHeader(all_default=False, encoding=FrameEncoding.kPasses,
                extensions=Extensions()).encode(w, FrameContext(size, meta, None))
    lf.encode(w)
    w.write(1, 0)
    w.pu0()
    w.write(10, 1)
    w.pu0()
    w.write_bytes(b"\x00")
    return w.getvalue()


def _icc_stream(payload):
    from jxlmod.headers import FrameContext, SizeHeader, encode_signature
    w = BitWriter()
    encode_signature(w)
    size = SizeHeader.for_dims(4, 4)
    size.encode(w)
    build_metadata(ImageSpec(4, 4, icc=b"x")).encode(w, FrameContext(size, None))
    w.pu0()
    w.write_bytes(brotli_io.compress(payload))
    return w.getvalue()


def _v(n):
    w = BitWriter()
    write_varint(w, n)
    return w.getvalue()


def _lossless_group_with(dist_bits, xs=4, ys=4, clustered=True):
    """A kLossless RGB frame whose first distribution is ``dist_bits(w)``."""
    w = BitWriter()
    w.write(8, 0)   # colour transform
    w.write(8, 0)   # prediction modes
    if clustered:
        w.write(1, 1)
        w.write(2, 0)   # every context in cluster 0
    else:
        w.write(1, 0)   # cluster map coded with its own distribution
    dist_bits(w)
    w.pu0()
    body = w.getvalue() + bytes(16)
    return frame_stream([body], FrameEncoding.kLossless, xs, ys, lossless=LosslessMode())


def _two_equal(v, count):
    def bits(w):
        w.write(1, 1)
        w.write(1, 1)
        write_u8(w, v)
        write_u8(w, v)
        w.write(12, count)
    return bits


def _permuted_toc(dist_bits):
    def toc(w):
        w.write(1, 1)
        w.write(1, 1)
        w.write(2, 0)
        dist_bits(w)
        w.pu0()
    return toc


def _palette_modular(rng, backend, value_of):
    w, h = 6, 5
    cols = [(rng.randrange(256), rng.randrange(256), rng.randrange(256)) for _ in range(4)]
    pick = [[cols[(x + y) % 4] for x in range(w)] for y in range(h)]
    chans = [Channel(w, h, data=[[px[c] for px in row] for row in pick]) for c in range(3)]
    img = ModularImage(chans, xsize=w, ysize=h)
    sig = forward_transforms(img, [(PALETTE, [0, 2])])
    nb = sig[0][1][2]
    idx = img.channels[1].data
    y, x = rng.randrange(h), rng.randrange(w)
    idx[y][x] = value_of(nb)
    if not any(v == 0 for row in idx for v in row):
        idx[(y + 1) % h][x] = 0
    bw = BitWriter()
    encode_modular(bw, [(w, h, 0, 0)] * 3, w, h, sig, img.channels, ChannelPlan(0, backend), 0, 8)
    bw.pu0()
    return modular_frame(bw.getvalue(), w, h)


def _lossless_palette_overflow(rng, t):
    xs = ys = 17
    n = xs * ys
    planes = [[rng.randrange(256) for _ in range(n)] for _ in range(3)]
    head = BitWriter()
    small = build_palette([0, 1, 2], False)
    encode_palettes(head, [None, small, None], False, False, n)
    encode_group(head, planes, False, False, xs, ys, [None] * 3, t)
    head.pu0()
    return frame_stream([head.getvalue()], FrameEncoding.kLossless, xs, ys, lossless=LosslessMode())


def build_corpus():
    rng = random.Random(9)
    corpus = []
    add = lambda kind, data: corpus.append((kind, data))  # noqa: E731

    # zero TOC entry
    add("zero toc", frame_stream([], FrameEncoding.kModular, 4, 4, raw_entries=[1, 1, 0, 1, 1, 1]))
    add("zero toc", frame_stream([], FrameEncoding.kModular, 4, 4, raw_entries=[0] * 6))
    add("zero toc", frame_stream([], FrameEncoding.kModularGroup, 300, 10, raw_entries=[0, 5]))
    add("zero toc", frame_stream([], FrameEncoding.kModularGroup, 300, 10, raw_entries=[5, 0]))
    add("zero toc", frame_stream([], FrameEncoding.kLossless, 4, 4, lossless=LosslessMode(),
                                 raw_entries=[0]))
    add("zero toc", frame_stream([], FrameEncoding.kLossless, 300, 10, lossless=LosslessMode(),
                                 raw_entries=[3, 0, 4]))

    # v1 == v2 two-symbol distributions
    add("v1==v2", _lossless_group_with(_two_equal(0, 100)))
    add("v1==v2", _lossless_group_with(_two_equal(255, 4095), 16, 16))
    add("v1==v2", _lossless_group_with(_two_equal(7, 0), clustered=False))
    add("v1==v2", frame_stream([b"\0"] * 2, FrameEncoding.kModularGroup, 300, 10,
                               toc_bits=_permuted_toc(_two_equal(1, 2048))))
    add("v1==v2", frame_stream([b"\0"] * 2, FrameEncoding.kModularGroup, 300, 10,
                               toc_bits=_permuted_toc(_two_equal(200, 1))))
    add("v1==v2", _lossless_group_with(_two_equal(3, 17), 9, 9, clustered=False))

    # F16 with biased exponent 31
    for field, bad in [("gab_x_weight1", 0x7C00), ("gab_b_weight2", 0xFC00),
                       ("epf_weight_min", 0x7E00), ("epf_scale_y", 0x7FFF),
                       ("epf_sharp_lut3", 0xFFFF), ("epf_range_mul", 0x7C01),
                       ("epf_quant_mul", 0xFE00), ("qco_interval_mul", 0x7DFF)]:
        add("biased_exp 31", _bad_f16_stream(field, bad))

    # Varint longer than 63 bits
    ff = b"\xff" * 12
    add("varint", _icc_stream(ff))
    add("varint", _icc_stream(_v(300) + ff))
    add("varint", _icc_stream(_v(200) + _v(12) + ff + bytes(128)))
    add("varint", _icc_stream(_v(200) + _v(12) + b"\x00\x01" + b"\xff" * 10 + bytes(128)))
    add("varint", modular_frame(ff, 4, 4))
    add("varint", modular_frame(b"\x00" + ff, 4, 4))
    add("varint", modular_frame(b"\x00\x01" + ff, 4, 4))
    add("varint", modular_frame(b"\x00\x00" + ff, 4, 4))

    # palette index overflow
    for backend, fn in [(0, lambda nb: nb), (1, lambda nb: nb + 3), (2, lambda nb: 2 * nb),
                        (0, lambda nb: 255), (2, lambda nb: nb)]:
        add("palette index", _palette_modular(rng, backend, fn))
    for t in (1, 4, 9):
        check(AFFECTED[t][1], "transform must touch green")
        add("palette index", _lossless_palette_overflow(rng, t))

    # truncated streams
    rgb = [[[rng.randrange(256) for _ in range(9)] for _ in range(7)] for _ in range(3)]
    grey = [[[rng.randrange(8) * 30 for _ in range(20)] for _ in range(20)]]
    anim = [[[rng.randrange(256) for _ in range(6)] for _ in range(6)] for _ in range(3)]
    valid = [
        encode_image(ImageSpec(9, 7), [FrameSpec(rgb, transforms=[(YCOCG, []), (SQUEEZE, [])])]),
        encode_image(ImageSpec(20, 20, grey=True),
                     [FrameSpec(grey, encoding="lossless", palettes=True)]),
        encode_image(ImageSpec(6, 6, animation=True, icc=_fixture_profile()[:300]),
                     [FrameSpec(anim, duration=2), FrameSpec(anim, encoding="lossless")]),
    ]
    for data in valid:
        decode_codestream(data)
    cuts = [(0, 1), (0, 7), (0, -1), (0, -3), (0, 30),
            (1, 3), (1, -1), (1, 40), (1, -20),
            (2, 5), (2, 60), (2, -1), (2, -10)]
    for k, cut in cuts:
        add("truncated", valid[k][:cut])
    anim_cs = decode_codestream(valid[2], decode_pixels=False)
    add("truncated", valid[2][:anim_cs.frames[0].end])
    return corpus


def criterion_9():
    corpus = build_corpus()
    check(len(corpus) == 50, f"corpus has {len(corpus)} cases")
    kinds = {}
    for kind, data in corpus:
        try:
            decode_codestream(data)
        except IllFormed:
            kinds[kind] = kinds.get(kind, 0) + 1
            continue
        except Exception as e:
            raise AssertionError(f"{kind}: crashed with {type(e).__name__}: {e}") from None
        raise AssertionError(f"{kind}: decoded without complaint")
    return f"{len(corpus)} mutated streams all IllFormed: " + \
        ", ".join(f"{k} {v}" for k, v in kinds.items())


# ---------------------------------------------------------------------------
# 10. determinism

def criterion_10(tmp):
    runs = []
    for k in range(2):
        d = Path(tmp) / f"run{k}"
        res = subprocess.run([sys.executable, "-m", "jxlmod", "selftest", "--seed", "42",
                              "--fixtures", str(d)], capture_output=True, text=True, cwd=ROOT)
        check(res.returncode == 0, f"selftest exited {res.returncode}: {res.stdout}{res.stderr}")
        files = {f.name: f.read_bytes() for f in sorted(d.iterdir())}
        runs.append((res.stdout, files))
    check(runs[0][0] == runs[1][0], "summaries differ")
    check(runs[0][1] == runs[1][1], "fixture bytes differ")
    total = runs[0][0].strip().splitlines()[-1]
    return f"identical summaries and {len(runs[0][1])} fixture files ({total})"


# ---------------------------------------------------------------------------
# pytest entry points

def _assert_criterion(capsys, n, body, limit=None):
    ok, line = run_criterion(n, body, limit)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def test_criterion_1(capsys):
    _assert_criterion(capsys, 1, criterion_1, 1)


def test_criterion_2(capsys):
    _assert_criterion(capsys, 2, criterion_2, 30)


def test_criterion_3(capsys):
    _assert_criterion(capsys, 3, criterion_3, 10)


def test_criterion_4(capsys):
    _assert_criterion(capsys, 4, criterion_4, 10)


def test_criterion_5(capsys):
    _assert_criterion(capsys, 5, criterion_5, 60)


def test_criterion_6(capsys):
    _assert_criterion(capsys, 6, criterion_6, 60)


def test_criterion_7(capsys, monkeypatch):
    _assert_criterion(capsys, 7, lambda: criterion_7(monkeypatch))


def test_criterion_8(capsys):
    pytest.importorskip("PIL.ImageCms")
    _assert_criterion(capsys, 8, criterion_8)


def test_criterion_9(capsys):
    _assert_criterion(capsys, 9, criterion_9)


def test_criterion_10(capsys, tmp_path):
    _assert_criterion(capsys, 10, lambda: criterion_10(tmp_path))


if __name__ == "__main__":
    import tempfile

    mp = pytest.MonkeyPatch()
    bodies = {
        1: (criterion_1, 1), 2: (criterion_2, 30), 3: (criterion_3, 10), 4: (criterion_4, 10),
        5: (criterion_5, 60), 6: (criterion_6, 60), 7: (lambda: criterion_7(mp), None),
        8: (criterion_8, None), 9: (criterion_9, None),
    }
    failed = 0
    with tempfile.TemporaryDirectory() as tmp:
        bodies[10] = (lambda: criterion_10(tmp), None)
        for n, (body, limit) in bodies.items():
            ok, line = run_criterion(n, body, limit)
            print(line, flush=True)
            failed += not ok
    mp.undo()
    sys.exit(1 if failed else 0)
