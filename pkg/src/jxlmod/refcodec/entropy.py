"""Encoders mirroring :mod:`jxlmod.entropy` bit for bit."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

from ..bitio import BitWriter, write_u8
from ..entropy import (
    ANS_FINAL_STATE, ANS_TAB_SIZE, CTX_EXP, CTX_MANT, CTX_SIGN, CTX_ZERO,
    LOG_COUNT_LUT, LOG_COUNT_RLE, MA_TREE_INIT_ZERO, PERMUTATION_CONTEXTS,
    SANS_ALPHABET, SANS_NUM_SYMBOLS_CODE, SANS_TOTAL, SANS_WEIGHT_CODE,
    SIGN_INIT, ZERO_INIT, AliasTable, MaTree, SansDistribution,
    flat_distribution, init_begabrac, permutation_context,
)
from ..errors import EncoderError

# logcount -> (code length, code bits) for the LSB-first prefix code
LOG_COUNT_CODE = {}
for _h, (_n, _lc) in enumerate(LOG_COUNT_LUT):
    LOG_COUNT_CODE.setdefault(_lc, (_n, _h & ((1 << _n) - 1)))


# ---------------------------------------------------------------------------
# ANS

def hybrid_uint_split(value: int) -> tuple[int, int, int]:
    """Return (token, nbits, extra) such that the decoder rebuilds ``value``."""
    if value < 16:
        return value, 0, 0
    n = value.bit_length() - 1
    token = 16 + 2 * (n - 4) + ((value >> (n - 1)) & 1)
    return token, n - 1, value & ((1 << (n - 1)) - 1)


def write_ans_ops(w: BitWriter, ops: Sequence[tuple]) -> None:
    """Emit an ANS stream.

    ``ops`` is the decoder's read order: ``(table, symbol)`` for a symbol
    and ``(None, nbits, value)`` for raw bits read between symbols.
    """
    state = ANS_FINAL_STATE
    words: list[Optional[int]] = [None] * len(ops)
    for k in range(len(ops) - 1, -1, -1):
        op = ops[k]
        table = op[0]
        if table is None:
            continue
        sym = op[1]
        f = table.counts[sym]
        if f == 0:
            raise EncoderError(f"symbol {sym} has zero probability")
        if state >= f << 20:
            words[k] = state & 0xFFFF
            state >>= 16
        state = ((state // f) << 12) | table.slot(sym, state % f)
    w.write(32, state)
    for k, op in enumerate(ops):
        if op[0] is None:
            w.write(op[1], op[2])
        elif words[k] is not None:
            w.write(16, words[k])


def ans_encode(symbols: Sequence[int], counts: Sequence[int]) -> bytes:
    """Encode ``symbols`` under a single distribution; no header is written."""
    table = AliasTable(counts)
    w = BitWriter()
    write_ans_ops(w, [(table, s) for s in symbols])
    return w.getvalue()


def normalize_counts(hist: Sequence[int], total: int = ANS_TAB_SIZE) -> list[int]:
    """Scale a histogram to sum to ``total`` keeping every used symbol >= 1."""
    hist = list(hist)
    used = [i for i, c in enumerate(hist) if c > 0]
    out = [0] * len(hist)
    if not used:
        out = out or [0]
        out[0] = total
        return out
    s = sum(hist[i] for i in used)
    for i in used:
        out[i] = max(1, hist[i] * total // s)
    diff = total - sum(out)
    order = sorted(used, key=lambda i: -out[i])
    out[order[0]] += diff
    k = 0
    while out[order[0]] < 1:
        # the largest went non-positive; borrow from the others
        j = order[1 + k % (len(order) - 1)]
        if out[j] > 1:
            out[j] -= 1
            out[order[0]] += 1
        k += 1
    return out


def _write_code(w: BitWriter, lc: int) -> None:
    n, bits = LOG_COUNT_CODE[lc]
    w.write(n, bits)


def encode_distribution(w: BitWriter, counts: Sequence[int]) -> None:
    counts = list(counts)
    if len(counts) > 256 or sum(counts) != ANS_TAB_SIZE or min(counts) < 0:
        raise EncoderError("distribution must have <=256 entries summing to 4096")
    nz = [i for i, c in enumerate(counts) if c]
    if len(nz) == 1:
        w.write(1, 1)
        w.write(1, 0)
        write_u8(w, nz[0])
        return
    if len(nz) == 2:
        w.write(1, 1)
        w.write(1, 1)
        write_u8(w, nz[0])
        write_u8(w, nz[1])
        w.write(12, counts[nz[0]])
        return
    alphabet_size = nz[-1] + 1
    w.write(1, 0)
    if counts[:alphabet_size] == flat_distribution(alphabet_size):
        w.write(1, 1)
        write_u8(w, alphabet_size - 1)
        return
    w.write(1, 0)
    # shift 13 makes every count exactly representable
    w.write(3, 0b111)
    w.write(3, 13 - 7)
    write_u8(w, alphabet_size - 3)
    vals = counts[:alphabet_size]
    logc = [v.bit_length() for v in vals]

    run_start = _plan_runs(vals)
    while True:
        coded = [i for i in range(alphabet_size) if run_start[i] != -2]
        omit = max(coded, key=lambda i: (logc[i], -i))
        if omit + 1 < alphabet_size and _in_run(run_start, omit + 1):
            _break_run_at(run_start, omit + 1, vals)
            continue
        break

    i = 0
    while i < alphabet_size:
        if run_start[i] >= 0:
            length = run_start[i]
            _write_code(w, LOG_COUNT_RLE)
            write_u8(w, length - 4)
            i += length
            continue
        _write_code(w, logc[i])
        i += 1
    for i in range(alphabet_size):
        if run_start[i] != -1 or i == omit:
            continue
        lc = logc[i]
        if lc >= 2:
            w.write(lc - 1, vals[i] - (1 << (lc - 1)))


def _plan_runs(vals):
    """Mark RLE runs: run_start[i] = run length at a run head, -2 inside, -1 coded."""
    n = len(vals)
    marks = [-1] * n
    i = 0
    while i < n:
        prev = vals[i - 1] if i else 0
        j = i
        while j < n and vals[j] == prev:
            j += 1
        length = min(j - i, 255 + 4)
        # a run may not reach the last symbol of the alphabet
        length = min(length, n - 1 - i)
        if length >= 4:
            marks[i] = length
            for k in range(i + 1, i + length):
                marks[k] = -2
            i += length
        else:
            i += 1
    return marks


def _in_run(marks, i):
    return marks[i] >= 0


def _break_run_at(marks, i, vals):
    length = marks[i]
    marks[i] = -1
    rest = length - 1
    if rest >= 4:
        marks[i + 1] = rest
    else:
        for k in range(i + 1, i + 1 + rest):
            marks[k] = -1


def _mtf_forward(values):
    mtf = list(range(256))
    out = []
    for v in values:
        idx = mtf.index(v)
        out.append(idx)
        if idx:
            del mtf[idx]
            mtf.insert(0, v)
    return out


def encode_cluster_map(w: BitWriter, cmap: Sequence[int]) -> None:
    n_clusters = max(cmap) + 1 if cmap else 0
    if sorted(set(cmap)) != list(range(n_clusters)):
        raise EncoderError("cluster map must use every cluster index")
    if n_clusters <= 8:
        nbits = (n_clusters - 1).bit_length() if n_clusters > 1 else 0
        w.write(1, 1)
        w.write(2, nbits)
        for c in cmap:
            w.write(nbits, c)
        return
    w.write(1, 0)
    mtf = _mtf_forward(cmap)
    tokens = []  # (symbol, nbits, extra)
    i = 0
    while i < len(mtf):
        if mtf[i] == 0:
            j = i
            while j < len(mtf) and mtf[j] == 0:
                j += 1
            run = j - i
            if run >= 3:
                r = run - 1
                k = (r - 1).bit_length() - 1
                tokens.append((8 + k, k, r - 1 - (1 << k)))
                i = j
                continue
        v = mtf[i]
        if v > 254:
            raise EncoderError("cluster index too large for the clustering code")
        s = (v + 1).bit_length() - 1
        tokens.append((s, s, v + 1 - (1 << s)))
        i += 1
    hist = [0] * 256
    for s, _, _ in tokens:
        hist[s] += 1
    counts = normalize_counts(hist[:max(s for s, _, _ in tokens) + 1])
    encode_distribution(w, counts)
    table = AliasTable(counts)
    ops = []
    for s, nb, extra in tokens:
        ops.append((table, s))
        if nb:
            ops.append((None, nb, extra))
    write_ans_ops(w, ops)


class AnsStreamBuilder:
    """Collects context-tagged symbols, then writes distributions and stream."""

    def __init__(self, num_contexts: int):
        self.num_contexts = num_contexts
        self.ops: list[tuple] = []

    def symbol(self, ctx: int, sym: int) -> None:
        self.ops.append((ctx, sym))

    def bits(self, nbits: int, value: int) -> None:
        if nbits:
            self.ops.append((None, nbits, value))

    def hybrid(self, ctx: int, value: int) -> None:
        token, nb, extra = hybrid_uint_split(value)
        self.ops.append((ctx, token))
        if nb:
            self.ops.append((None, nb, extra))

    def histograms(self) -> list[list[int]]:
        hists = [[0] * 256 for _ in range(self.num_contexts)]
        for op in self.ops:
            if op[0] is not None:
                hists[op[0]][op[1]] += 1
        return hists

    def write_distributions(self, w: BitWriter, clustered: bool = True) -> list[AliasTable]:
        hists = self.histograms()
        if clustered:
            used = [c for c in range(self.num_contexts) if any(hists[c])]
            cmap = [0] * self.num_contexts
            cluster_hists: list[list[int]] = []
            seen: dict = {}
            for c in used:
                key = tuple(hists[c])
                if key not in seen:
                    seen[key] = len(cluster_hists)
                    cluster_hists.append(hists[c])
                cmap[c] = seen[key]
            if not cluster_hists:
                cluster_hists.append([1])
            encode_cluster_map(w, cmap)
        else:
            if self.num_contexts != 1:
                raise EncoderError("unclustered streams carry one distribution")
            cmap = [0]
            cluster_hists = hists if any(hists[0]) else [[1]]
        tables = []
        for h in cluster_hists:
            last = max((i for i, c in enumerate(h) if c), default=0)
            counts = normalize_counts(h[:last + 1])
            encode_distribution(w, counts)
            tables.append(AliasTable(counts))
        return [tables[c] for c in cmap]

    def write_stream(self, w: BitWriter, tables: list[AliasTable]) -> None:
        ops = [(tables[op[0]], op[1]) if op[0] is not None else op for op in self.ops]
        write_ans_ops(w, ops)

    def write(self, w: BitWriter, clustered: bool = True) -> None:
        tables = self.write_distributions(w, clustered)
        self.write_stream(w, tables)


def lehmer_code(perm: Sequence[int]) -> list[int]:
    temp = sorted(perm)
    if temp != list(range(len(perm))):
        raise EncoderError("not a permutation")
    out = []
    for p in perm:
        idx = temp.index(p)
        out.append(idx)
        temp.pop(idx)
    return out


def add_permutation(builder: AnsStreamBuilder, perm: Sequence[int], skip: int = 0) -> None:
    lehmer = lehmer_code(perm)
    size = len(perm)
    if any(lehmer[:skip]):
        raise EncoderError("skipped Lehmer entries must be zero")
    count = 0
    for i in range(size - 1, skip - 1, -1):
        if lehmer[i]:
            count = i + 1 - skip
            break
    log_end = (count + 1).bit_length() - 1
    builder.symbol(permutation_context(size), log_end)
    builder.bits(log_end, count + 1 - (1 << log_end))
    prev = 0
    for i in range(count):
        v = lehmer[skip + i]
        s = (v + 1).bit_length() - 1
        builder.symbol(min(prev, PERMUTATION_CONTEXTS - 1), s)
        builder.bits(s, v + 1 - (1 << s))
        prev = s


def encode_permutation(w: BitWriter, perm: Sequence[int], skip: int = 0) -> None:
    """Full TOC-style permutation stream: 8 clustered distributions + ANS."""
    b = AnsStreamBuilder(PERMUTATION_CONTEXTS)
    add_permutation(b, perm, skip)
    b.write(w)


# ---------------------------------------------------------------------------
# sANS

_SANS_NUM_CODE = {v: k for k, v in SANS_NUM_SYMBOLS_CODE.items()}
_SANS_WEIGHT_CODE = {v: k for k, v in SANS_WEIGHT_CODE.items()}


def _write_prefix(w: BitWriter, code: str) -> None:
    for ch in code:
        w.write(1, 1 if ch == "1" else 0)


def sans_weight_code(weight: int) -> int:
    return weight.bit_length()


def sans_quantize(hist: Sequence[int]) -> list[int]:
    """Normalize to 1024 and round weights down to representable values."""
    counts = normalize_counts(list(hist) + [0] * (SANS_ALPHABET - len(hist)), SANS_TOTAL)
    nz = [i for i, c in enumerate(counts) if c]
    if len(nz) <= 2:
        return counts
    codes = [sans_weight_code(c) for c in counts]
    rem = codes.index(max(codes))
    out = list(counts)
    for i, c in enumerate(counts):
        if i == rem or c <= 1:
            continue
        code = codes[i]
        bits = code // 2
        shift = code - 1 - bits
        out[i] = (1 << (code - 1)) + (((c - (1 << (code - 1))) >> shift) << shift)
    out[rem] = SANS_TOTAL - sum(out[i] for i in range(SANS_ALPHABET) if i != rem)
    return out


def sans_encode_distribution(w: BitWriter, counts: Sequence[int]) -> None:
    counts = list(counts)
    if len(counts) != SANS_ALPHABET or sum(counts) != SANS_TOTAL:
        raise EncoderError("sANS distribution must have 18 entries summing to 1024")
    nz = [i for i, c in enumerate(counts) if c]
    max_bits = (SANS_ALPHABET - 1).bit_length()
    if len(nz) <= 2:
        w.write(1, 1)
        w.write(1, len(nz) - 1)
        w.write(max_bits, nz[0])
        if len(nz) == 2:
            w.write(max_bits, nz[1])
            w.write(10, counts[nz[0]])
        return
    w.write(1, 0)
    num_symbols = max(3, nz[-1] + 1)
    codes = [sans_weight_code(c) for c in counts[:num_symbols]]
    if max(codes) > 10:
        raise EncoderError("sANS weight too large for the prefix code")
    rem = codes.index(max(codes))
    _write_prefix(w, _SANS_NUM_CODE[num_symbols])
    for code in codes:
        _write_prefix(w, _SANS_WEIGHT_CODE[code])
    for i, code in enumerate(codes):
        if i == rem or code <= 1:
            continue
        bits = code // 2
        shift = code - 1 - bits
        extra = (counts[i] - (1 << (code - 1))) >> shift
        if (1 << (code - 1)) + (extra << shift) != counts[i]:
            raise EncoderError(f"weight {counts[i]} is not representable")
        w.write(bits, extra)


def sans_encode(symbols: Sequence[int], d: SansDistribution) -> bytes:
    """u(32) initial state followed by the refill words, in decode order."""
    state = ANS_FINAL_STATE
    words: list[Optional[int]] = [None] * len(symbols)
    for k in range(len(symbols) - 1, -1, -1):
        t = symbols[k]
        f = d.counts[t]
        if f == 0:
            raise EncoderError(f"sANS symbol {t} has zero probability")
        if state >= f << 22:
            words[k] = state & 0xFFFF
            state >>= 16
        state = ((state // f) << 10) + (d.cumulative[t] - f) + state % f
    w = BitWriter()
    w.write(32, state)
    for word in words:
        if word is not None:
            w.write(16, word)
    return w.getvalue()


# ---------------------------------------------------------------------------
# ABRAC / BEGABRAC

class AbracEncoder:
    """Range encoder whose output is read back by ``AbracDecoder``."""

    def __init__(self):
        self.range = 1 << 24
        self.low = 0
        self.out = bytearray()

    def put_bit(self, c: int, bit: int) -> None:
        rng = self.range
        nc = (rng * c) >> 12
        if bit:
            self.low += rng - nc
            rng = nc
        else:
            rng -= nc
        if self.low >= 1 << 24:
            self.low -= 1 << 24
            out = self.out
            k = len(out) - 1
            while out[k] == 255:
                out[k] = 0
                k -= 1
            out[k] += 1
        while rng <= 0x10000:
            self.out.append(self.low >> 16)
            self.low = (self.low & 0xFFFF) << 8
            rng <<= 8
        self.range = rng

    def put_adaptive_bit(self, chances: list[int], i: int, bit: int) -> None:
        ac = chances[i]
        self.put_bit(ac, bit)
        if bit:
            chances[i] = ac + ((4096 - ac) >> 5)
        else:
            chances[i] = ac - (ac >> 5)

    def put_begabrac(self, ctx: list[int], lower: int, upper: int, value: int) -> None:
        if not lower <= value <= upper:
            raise EncoderError(f"{value} outside [{lower}, {upper}]")
        put = self.put_adaptive_bit
        if value == 0:
            put(ctx, CTX_ZERO, 1)
            return
        put(ctx, CTX_ZERO, 0)
        if lower < 0:
            if upper > 0:
                sign = 1 if value > 0 else 0
                put(ctx, CTX_SIGN, sign)
            else:
                sign = 0
        else:
            sign = 1
        a = abs(value)
        emax = (upper if sign else -lower).bit_length() - 1
        exp = a.bit_length() - 1
        for i in range(exp):
            put(ctx, CTX_EXP + i, 0)
        if exp < emax:
            put(ctx, CTX_EXP + exp, 1)
        mx = upper if sign else -lower
        v = 1 << exp
        for i in range(exp - 1, -1, -1):
            one = v | (1 << i)
            if one > mx:
                continue
            b = (a >> i) & 1
            put(ctx, CTX_MANT + i, b)
            if b:
                v = one

    def finish(self) -> bytes:
        return bytes(self.out) + self.low.to_bytes(3, "big")


def abrac_encode(bits_with_chances) -> bytes:
    enc = AbracEncoder()
    for bit, c in bits_with_chances:
        enc.put_bit(c, bit)
    return enc.finish()


def begabrac_encode(values, bounds, init_ac_zero: int = 2048) -> bytes:
    """Encode ``values`` with one shared BEGABRAC context; bounds per value."""
    enc = AbracEncoder()
    ctx = init_begabrac(init_ac_zero)
    for v, (lo, hi) in zip(values, bounds):
        enc.put_begabrac(ctx, lo, hi, v)
    return enc.finish()


# ---------------------------------------------------------------------------
# MA trees

@dataclass
class Leaf:
    zc: int = 3          # index into ZERO_INIT
    sign: int = 3        # index into SIGN_INIT, used when zc < 3


@dataclass
class Split:
    prop: int
    value: int
    left: "TreeSpec"
    right: "TreeSpec"


TreeSpec = Union[Leaf, Split]


def encode_ma_tree(enc: AbracEncoder, spec: TreeSpec, ranges, signal_initialization: bool) -> MaTree:
    """Write ``spec`` and return the equivalent decoder-side tree."""
    ctxs = [init_begabrac(MA_TREE_INIT_ZERO) for _ in range(4)]
    top_prop = len(ranges) - 1
    tree = MaTree()
    tree.nodes.append(None)
    stack = [(0, spec, [tuple(r) for r in ranges])]
    while stack:
        slot, node, rngs = stack.pop()
        if isinstance(node, Leaf):
            enc.put_begabrac(ctxs[0], 0, top_prop, 0)
            leaf = None
            if signal_initialization:
                enc.put_begabrac(ctxs[1], -5, 5, node.zc - 5)
                leaf = init_begabrac(ZERO_INIT[node.zc])
                if node.zc < 3:
                    enc.put_begabrac(ctxs[2], -3, 3, node.sign - 3)
                    leaf[CTX_SIGN] = SIGN_INIT[node.sign]
            tree.nodes[slot] = (-1, len(tree.leaf_contexts), 0, 0)
            tree.leaf_contexts.append(leaf)
            continue
        if not 0 <= node.prop < top_prop:
            raise EncoderError(f"property {node.prop} not signallable")
        enc.put_begabrac(ctxs[0], 0, top_prop, node.prop + 1)
        lo, hi = rngs[node.prop]
        if not lo <= node.value <= hi - 1:
            raise EncoderError(f"split {node.value} outside [{lo}, {hi - 1}]")
        enc.put_begabrac(ctxs[3], lo, hi - 1, node.value)
        left = len(tree.nodes)
        tree.nodes.extend((None, None))
        tree.nodes[slot] = (node.prop, node.value, left, left + 1)
        lr = list(rngs)
        lr[node.prop] = (node.value + 1, hi)
        rr = list(rngs)
        rr[node.prop] = (lo, node.value)
        stack.append((left + 1, node.right, rr))
        stack.append((left, node.left, lr))
    return tree
