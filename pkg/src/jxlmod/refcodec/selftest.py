"""Embedded round-trip suites run by ``jxlmod selftest``."""
from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field

from ..bitio import BitReader, BitWriter
from ..entropy import (
    AbracDecoder, AnsDecoder, SansDecoder, decode_clustered_distributions, init_begabrac,
    sans_decode_distribution,
)
from ..errors import IllFormed
from ..icc import decode_icc_stream
from ..lossless import decode_palettes
from ..modular import Channel, inv_hsqueeze, inv_vsqueeze
from .entropy import (
    AbracEncoder, AnsStreamBuilder, sans_encode, sans_encode_distribution, sans_quantize,
)
from .icc import encode_icc_stream
from .lossless import build_palette, encode_palettes
from .modular import forward_squeeze_h, forward_squeeze_v


@dataclass
class SuiteResult:
    name: str
    passed: int = 0
    failed: int = 0
    digest: "hashlib._Hash" = field(default_factory=hashlib.sha256)
    fixtures: list = field(default_factory=list)

    def record(self, ok: bool, stream: bytes) -> None:
        if ok:
            self.passed += 1
        else:
            self.failed += 1
        self.digest.update(len(stream).to_bytes(4, "little") + stream)
        self.fixtures.append(stream)

    def line(self) -> str:
        status = "ok" if self.failed == 0 else "FAIL"
        return (f"{self.name:<9} {status:<4} passed={self.passed} failed={self.failed} "
                f"sha256={self.digest.hexdigest()[:16]}")


def _attempt(res: SuiteResult, fn) -> None:
    try:
        ok, stream = fn()
    except (IllFormed, AssertionError, IndexError, ValueError, KeyError):
        ok, stream = False, b""
    res.record(ok, stream)


def _ans_case(rng: random.Random):
    nctx = rng.randint(1, 4)
    alphabet = rng.choice([1, 2, 5, 40])
    n = rng.randint(0, 300)
    ops = []
    b = AnsStreamBuilder(nctx)
    for _ in range(n):
        ctx = rng.randrange(nctx)
        if rng.random() < 0.2:
            v = rng.randrange(1 << rng.randint(4, 20))
        else:
            v = min(int(rng.expovariate(0.5)), alphabet - 1)
        b.hybrid(ctx, v)
        ops.append((ctx, v))
    w = BitWriter()
    b.write(w)
    stream = w.getvalue()
    r = BitReader(stream)
    tables = decode_clustered_distributions(r, nctx).tables()
    dec = AnsDecoder(r)
    out = [(ctx, dec.read_hybrid_uint(tables[ctx])) for ctx, _ in ops]
    dec.check_final()
    return out == ops, stream


def _sans_case(rng: random.Random):
    hist = [rng.choice([0, 0, 1, 3, 10, 50]) for _ in range(18)]
    if not any(hist):
        hist[rng.randrange(18)] = 1
    counts = sans_quantize(hist)
    w = BitWriter()
    sans_encode_distribution(w, counts)
    head = w.getvalue()
    d = sans_decode_distribution(BitReader(head))
    support = [i for i, c in enumerate(counts) if c]
    syms = [rng.choice(support) for _ in range(rng.randint(0, 200))]
    body = sans_encode(syms, d)
    r = BitReader(body)
    dec = SansDecoder(r)
    out = [dec.read_symbol(d) for _ in syms]
    dec.check_final()
    return out == syms and d.counts == counts, head + body


def _begabrac_case(rng: random.Random):
    enc = AbracEncoder()
    ctx = init_begabrac(2048)
    vals = []
    for _ in range(rng.randint(1, 200)):
        lo = rng.randint(-300, 50)
        hi = lo + rng.randint(0, 400)
        v = rng.randint(lo, hi)
        enc.put_begabrac(ctx, lo, hi, v)
        vals.append((lo, hi, v))
    stream = enc.finish()
    dec = AbracDecoder(BitReader(stream))
    ctx = init_begabrac(2048)
    out = [dec.read_begabrac(ctx, lo, hi) for lo, hi, _ in vals]
    return out == [v for _, _, v in vals], stream


def suite_entropy(rng: random.Random, n: int) -> SuiteResult:
    res = SuiteResult("entropy")
    for i in range(n):
        _attempt(res, lambda: (_ans_case, _sans_case, _begabrac_case)[i % 3](rng))
    return res


def suite_squeeze(rng: random.Random, n: int) -> SuiteResult:
    res = SuiteResult("squeeze")
    for _ in range(n):
        w, h = rng.randint(1, 17), rng.randint(1, 17)
        hi = rng.choice([1, 255, 65535])
        ch = Channel(w, h, data=[[rng.randint(0, hi) for _ in range(w)] for _ in range(h)])
        horizontal = rng.random() < 0.5
        if (horizontal and w < 2) or (not horizontal and h < 2):
            horizontal = w >= 2
        if w < 2 and h < 2:
            res.record(True, b"")
            continue

        def case():
            if horizontal:
                avg, diff = forward_squeeze_h(ch)
                aw, rw = (w + 1) // 2, w // 2
                back = inv_hsqueeze(Channel(aw, h, data=avg), Channel(rw, h, data=diff))
            else:
                avg, diff = forward_squeeze_v(ch)
                ah, rh = (h + 1) // 2, h // 2
                back = inv_vsqueeze(Channel(w, ah, data=avg), Channel(w, rh, data=diff))
            blob = repr((avg, diff)).encode()
            return back.data == ch.data, blob
        _attempt(res, case)
    return res


def suite_palettes(rng: random.Random, n: int) -> SuiteResult:
    res = SuiteResult("palettes")
    for _ in range(n):
        grey = rng.random() < 0.5
        bits16 = rng.random() < 0.4
        nch = 1 if grey else 3
        # the 16-bit coder walks up to the largest member, so keep most cases small
        top = rng.choice([1023, 4095, 65535]) if bits16 else 255
        planes = []
        for _ in range(nch):
            k = rng.randint(1, 40)
            vals = [rng.randint(0, top) for _ in range(k)]
            planes.append([rng.choice(vals) for _ in range(300)])

        def case():
            pals = [build_palette(p, bits16) for p in planes]
            if not grey and rng.random() < 0.3:
                pals[rng.randrange(3)] = None
            w = BitWriter()
            encode_palettes(w, pals, grey, bits16, 300)
            stream = w.getvalue()
            got = decode_palettes(BitReader(stream), grey, bits16, 300)
            ok = [None if p is None else p.values for p in got] == \
                 [None if p is None else p.values for p in pals]
            return ok, stream
        _attempt(res, case)
    return res


def _synthetic_profile(rng: random.Random) -> bytes:
    names = [b"desc", b"wtpt", b"rXYZ", b"gXYZ", b"bXYZ", b"rTRC", b"gTRC", b"bTRC", b"cprt", b"zzzz"]
    tags = rng.sample(names, rng.randint(0, len(names)))
    start = 132 + 12 * len(tags)
    table, body = b"", b""
    for name in tags:
        kind = rng.choice([b"XYZ ", b"curv", b"text", b"mluc"])
        if kind == b"XYZ ":
            payload = kind + bytes(4) + bytes(rng.randrange(256) for _ in range(12))
        else:
            payload = kind + bytes(4) + bytes(rng.randrange(256) for _ in range(rng.randint(0, 40)))
        table += name + (start + len(body)).to_bytes(4, "big") + len(payload).to_bytes(4, "big")
        body += payload
    size = 132 + len(table) + len(body)
    header = bytearray(rng.randrange(256) for _ in range(128))
    header[0:4] = size.to_bytes(4, "big")
    header[36:40] = b"acsp"
    return bytes(header) + len(tags).to_bytes(4, "big") + table + body


def suite_icc(rng: random.Random, n: int) -> SuiteResult:
    res = SuiteResult("icc")
    for i in range(n):
        if i % 3 == 2:
            prof = bytes(rng.randrange(256) for _ in range(rng.randint(1, 300)))
        else:
            prof = _synthetic_profile(rng)

        def case():
            stream = encode_icc_stream(prof, structured=i % 2 == 0)
            return decode_icc_stream(stream) == prof, stream
        _attempt(res, case)
    return res


SUITES = {
    "entropy": suite_entropy,
    "squeeze": suite_squeeze,
    "palettes": suite_palettes,
    "icc": suite_icc,
}


def run_selftest(seed: int = 0, count: int = 60) -> list:
    results = []
    for name, fn in SUITES.items():
        # one independent stream per suite so suites do not perturb each other
        rng = random.Random(f"{seed}:{name}")
        results.append(fn(rng, count))
    return results
