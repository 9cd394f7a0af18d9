"""Entropy decoders: ANS with alias tables, sANS, ABRAC/BEGABRAC and MA trees.

Only decoding lives here; the matching encoders are in ``refcodec.entropy``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .bitio import BitReader, read_u8
from .errors import IllFormed

ANS_LOG_TAB = 12
ANS_TAB_SIZE = 1 << ANS_LOG_TAB
ALIAS_TABLE_SIZE = 256
BUCKET_SIZE = ANS_TAB_SIZE // ALIAS_TABLE_SIZE
ANS_FINAL_STATE = 0x130000

# (code length, logcount) indexed by the next 7 bits of the stream
LOG_COUNT_LUT = [
    (3, 10), (7, 12), (3, 7), (4, 3), (3, 6), (3, 8), (3, 9), (4, 5),
    (3, 10), (4, 4), (3, 7), (4, 1), (3, 6), (3, 8), (3, 9), (4, 2),
    (3, 10), (5, 0), (3, 7), (4, 3), (3, 6), (3, 8), (3, 9), (4, 5),
    (3, 10), (4, 4), (3, 7), (4, 1), (3, 6), (3, 8), (3, 9), (4, 2),
    (3, 10), (6, 11), (3, 7), (4, 3), (3, 6), (3, 8), (3, 9), (4, 5),
    (3, 10), (4, 4), (3, 7), (4, 1), (3, 6), (3, 8), (3, 9), (4, 2),
    (3, 10), (5, 0), (3, 7), (4, 3), (3, 6), (3, 8), (3, 9), (4, 5),
    (3, 10), (4, 4), (3, 7), (4, 1), (3, 6), (3, 8), (3, 9), (4, 2),
    (3, 10), (7, 13), (3, 7), (4, 3), (3, 6), (3, 8), (3, 9), (4, 5),
    (3, 10), (4, 4), (3, 7), (4, 1), (3, 6), (3, 8), (3, 9), (4, 2),
    (3, 10), (5, 0), (3, 7), (4, 3), (3, 6), (3, 8), (3, 9), (4, 5),
    (3, 10), (4, 4), (3, 7), (4, 1), (3, 6), (3, 8), (3, 9), (4, 2),
    (3, 10), (6, 11), (3, 7), (4, 3), (3, 6), (3, 8), (3, 9), (4, 5),
    (3, 10), (4, 4), (3, 7), (4, 1), (3, 6), (3, 8), (3, 9), (4, 2),
    (3, 10), (5, 0), (3, 7), (4, 3), (3, 6), (3, 8), (3, 9), (4, 5),
    (3, 10), (4, 4), (3, 7), (4, 1), (3, 6), (3, 8), (3, 9), (4, 2),
]
LOG_COUNT_RLE = 13


# ---------------------------------------------------------------------------
# alias mapping

class AliasTable:
    """Alias-method lookup for a 4096-sum distribution.

    ``symbols[x]`` and ``offsets[x]`` give AliasMapping(D, x).
    """

    __slots__ = ("counts", "symbols", "offsets", "_slots")

    def __init__(self, counts):
        counts = list(counts) + [0] * (ALIAS_TABLE_SIZE - len(counts))
        if len(counts) != ALIAS_TABLE_SIZE or sum(counts) != ANS_TAB_SIZE:
            raise IllFormed("distribution does not sum to 4096")
        self.counts = counts
        self.symbols, self.offsets = _build_alias(counts)
        self._slots = None

    def slot(self, symbol: int, offset: int) -> int:
        """Inverse mapping (used by the encoder)."""
        if self._slots is None:
            slots = [[0] * c for c in self.counts]
            for x, (s, o) in enumerate(zip(self.symbols, self.offsets)):
                slots[s][o] = x
            self._slots = slots
        return self._slots[symbol][offset]


def _build_alias(counts):
    # each bucket is a list of runs (symbol, first_offset, length)
    buckets = []
    fill = []
    overflow = []
    underfull = []
    for i, c in enumerate(counts):
        buckets.append([(i, 0, c)] if c else [])
        fill.append(c)
        if c > BUCKET_SIZE:
            overflow.append(i)
        elif c < BUCKET_SIZE:
            underfull.append(i)
    while overflow and underfull:
        u = underfull.pop()
        o = overflow.pop()
        need = BUCKET_SIZE - fill[u]
        sym, start, length = buckets[o][-1]
        # an overflowing bucket only ever holds its own leading run
        keep = length - need
        buckets[o][-1] = (sym, start, keep)
        buckets[u].append((sym, start + keep, need))
        fill[u] = BUCKET_SIZE
        fill[o] -= need
        if fill[o] > BUCKET_SIZE:
            overflow.append(o)
        elif fill[o] < BUCKET_SIZE:
            underfull.append(o)
    symbols = []
    offsets = []
    for runs in buckets:
        for sym, start, length in runs:
            if length:
                symbols.extend([sym] * length)
                offsets.extend(range(start, start + length))
    return symbols, offsets


# ---------------------------------------------------------------------------
# ANS symbol decoding

class AnsDecoder:
    __slots__ = ("reader", "state")

    def __init__(self, reader: BitReader):
        self.reader = reader
        self.state = reader.u(32)

    def read_symbol(self, table: AliasTable) -> int:
        state = self.state
        idx = state & 0xFFF
        sym = table.symbols[idx]
        state = table.counts[sym] * (state >> 12) + table.offsets[idx]
        if state < 0x10000:
            state = (state << 16) | self.reader.u(16)
        self.state = state
        return sym

    def read_hybrid_uint(self, table: AliasTable) -> int:
        token = self.read_symbol(table)
        if token < 16:
            return token
        n = 4 + ((token - 16) >> 1)
        return (1 << n) + ((token & 1) << (n - 1)) + self.reader.u(n - 1)

    def check_final(self) -> None:
        if self.state != ANS_FINAL_STATE:
            raise self.reader.error(f"ANS final state {self.state:#x} != 0x130000")


def decode_hybrid_uint(token: int, reader: BitReader) -> int:
    if token < 16:
        return token
    n = 4 + ((token - 16) >> 1)
    return (1 << n) + ((token & 1) << (n - 1)) + reader.u(n - 1)


# ---------------------------------------------------------------------------
# distributions

def flat_distribution(alphabet_size: int) -> list[int]:
    base, extra = divmod(ANS_TAB_SIZE, alphabet_size)
    return [base + 1] * extra + [base] * (alphabet_size - extra)


def _peek7(r: BitReader) -> int:
    avail = r.remaining_bits()
    if avail >= 7:
        pos = r.bit_pos
        v = r.u(7)
        r.bit_pos = pos
        return v
    pos = r.bit_pos
    v = r.u(avail)
    r.bit_pos = pos
    return v  # missing high bits read as zero


def decode_distribution(r: BitReader) -> list[int]:
    """Read one 256-entry distribution summing to 4096."""
    start = r.bit_pos
    D = [0] * ALIAS_TABLE_SIZE
    if r.u(1):
        if r.u(1) == 0:
            D[read_u8(r)] = ANS_TAB_SIZE
            return D
        v1 = read_u8(r)
        v2 = read_u8(r)
        if v1 == v2:
            raise IllFormed("two-symbol distribution with v1 == v2", start >> 3)
        D[v1] = r.u(12)
        D[v2] = ANS_TAB_SIZE - D[v1]
        return D
    if r.u(1):
        alphabet_size = read_u8(r) + 1
        D[:alphabet_size] = flat_distribution(alphabet_size)
        return D

    length = 0
    while length < 3 and r.u(1):
        length += 1
    shift = r.u(length) + (1 << length) - 1
    alphabet_size = read_u8(r) + 3
    if alphabet_size > ALIAS_TABLE_SIZE:
        raise IllFormed("alphabet_size > 256", start >> 3)

    logcounts = [0] * alphabet_size
    same = [False] * alphabet_size
    omit = -1
    omit_log = -1
    i = 0
    while i < alphabet_size:
        h = _peek7(r)
        nb, logcount = LOG_COUNT_LUT[h]
        r.skip(nb)
        if logcount == LOG_COUNT_RLE:
            rle = read_u8(r)
            if i + rle + 3 >= alphabet_size:
                raise IllFormed("distribution RLE runs past the alphabet", r.byte_pos)
            for j in range(i, i + rle + 4):
                same[j] = True
            i += rle + 4
            continue
        logcounts[i] = logcount
        if logcount > omit_log:
            omit_log = logcount
            omit = i
        i += 1
    if omit < 0:
        raise IllFormed("distribution has no explicitly coded symbol", r.byte_pos)
    if omit + 1 < alphabet_size and same[omit + 1]:
        raise IllFormed("RLE directly after the omitted symbol", r.byte_pos)

    total = 0
    prev = 0
    for i in range(alphabet_size):
        if same[i]:
            D[i] = prev
        elif i == omit:
            D[i] = 0
        else:
            lc = logcounts[i]
            if lc <= 1:
                D[i] = lc
            else:
                nbits = max(0, min(lc - 1, shift - ((13 - lc) >> 1)))
                D[i] = (r.u(nbits) << (lc - 1 - nbits)) + (1 << (lc - 1))
        prev = D[i]
        total += D[i]
    rest = ANS_TAB_SIZE - total
    if rest <= 0:
        raise IllFormed("omitted symbol would get a non-positive count", r.byte_pos)
    D[omit] = rest
    return D


def decode_cluster_map(r: BitReader, num_distributions: int) -> list[int]:
    if r.u(1):
        nbits = r.u(2)
        clusters = [r.u(nbits) for _ in range(num_distributions)]
    else:
        table = AliasTable(decode_distribution(r))
        dec = AnsDecoder(r)
        clusters = [0] * num_distributions
        i = 0
        while i < num_distributions:
            sym = dec.read_symbol(table)
            if sym < 8:
                clusters[i] = (1 << sym) + r.u(sym) - 1
                i += 1
            else:
                run = (1 << (sym - 8)) + r.u(sym - 8) + 1
                if i + run >= num_distributions:
                    raise IllFormed("cluster RLE past the end", r.byte_pos)
                i += run + 1
        dec.check_final()
        for v in clusters:
            if v > 255:
                raise IllFormed("cluster index exceeds 255", r.byte_pos)
        inverse_move_to_front(clusters)
    num_clusters = max(clusters) + 1 if clusters else 0
    if len(set(clusters)) != num_clusters:
        raise IllFormed("unused cluster index", r.byte_pos)
    return clusters


def inverse_move_to_front(values: list[int]) -> None:
    mtf = list(range(256))
    for i, index in enumerate(values):
        value = mtf[index]
        values[i] = value
        if index:
            del mtf[index]
            mtf.insert(0, value)


@dataclass
class ClusteredDistributions:
    cluster_map: list[int]
    clusters: list[AliasTable]

    def __getitem__(self, ctx: int) -> AliasTable:
        return self.clusters[self.cluster_map[ctx]]

    def tables(self) -> list[AliasTable]:
        return [self.clusters[c] for c in self.cluster_map]


def decode_clustered_distributions(r: BitReader, num_distributions: int) -> ClusteredDistributions:
    cmap = decode_cluster_map(r, num_distributions)
    num_clusters = max(cmap) + 1 if cmap else 0
    clusters = [AliasTable(decode_distribution(r)) for _ in range(num_clusters)]
    return ClusteredDistributions(cmap, clusters)


# ---------------------------------------------------------------------------
# Lehmer-coded permutations

PERMUTATION_CONTEXTS = 8


def permutation_context(x: int) -> int:
    # ceil(log2(x + 1)) == x.bit_length(); clamped into the 8 available slots
    return min(PERMUTATION_CONTEXTS - 1, x.bit_length())


def decode_permutation(r: BitReader, dec: AnsDecoder, dists: ClusteredDistributions,
                       size: int, skip: int = 0) -> list[int]:
    log_end = dec.read_symbol(dists[permutation_context(size)])
    if log_end > 31:
        raise r.error("permutation length exponent too large")
    end = (1 << log_end) + r.u(log_end) - 1 + skip
    if end > size:
        raise r.error("permutation Lehmer code longer than the permutation")
    lehmer = [0] * size
    prev = 0
    for i in range(end - skip):
        s = dec.read_symbol(dists[min(prev, PERMUTATION_CONTEXTS - 1)])
        if s > 31:
            raise r.error("Lehmer element exponent too large")
        lehmer[skip + i] = (1 << s) + r.u(s) - 1
        prev = s
    temp = list(range(size))
    perm = []
    for i in range(size):
        if lehmer[i] >= len(temp):
            raise r.error("Lehmer element out of range")
        perm.append(temp.pop(lehmer[i]))
    return perm


# ---------------------------------------------------------------------------
# sANS

SANS_ALPHABET = 18
SANS_TOTAL = 1 << 10

# prefix codes, written as the bit strings fetched left to right
SANS_NUM_SYMBOLS_CODE = {
    "000": 10, "001": 11, "010": 12, "011": 13, "100": 14, "101": 15,
    "1100": 9, "1101": 16, "11100": 8, "11101": 17, "111100": 5,
    "111101": 6, "111110": 7, "1111110": 18, "11111110": 3, "11111111": 4,
}
SANS_WEIGHT_CODE = {
    "00": 6, "010": 4, "011": 5, "100": 7, "101": 8, "1100": 1,
    "1101": 2, "1110": 3, "11110": 0, "111110": 9, "111111": 10,
}


def _read_prefix(r: BitReader, table: dict) -> int:
    code = ""
    while code not in table:
        if len(code) >= 8:
            raise r.error("invalid prefix code")
        code += "1" if r.u(1) else "0"
    return table[code]


class SansDistribution:
    __slots__ = ("counts", "cumulative")

    def __init__(self, counts):
        if len(counts) != SANS_ALPHABET or sum(counts) != SANS_TOTAL:
            raise IllFormed("sANS distribution must have 18 entries summing to 1024")
        self.counts = list(counts)
        acc = 0
        self.cumulative = []  # S(D, i)
        for c in self.counts:
            acc += c
            self.cumulative.append(acc)

    def resolve(self, x: int) -> int:
        for s, total in enumerate(self.cumulative):
            if total > x:
                return s
        raise IllFormed("sANS value outside the distribution")


def sans_decode_distribution(r: BitReader) -> SansDistribution:
    D = [0] * SANS_ALPHABET
    if r.u(1):
        max_bits = (SANS_ALPHABET - 1).bit_length()
        num_tokens = r.u(1) + 1
        v1 = r.u(max_bits)
        if v1 >= SANS_ALPHABET:
            raise r.error("sANS symbol out of range")
        if num_tokens == 1:
            D[v1] = SANS_TOTAL
            return SansDistribution(D)
        v2 = r.u(max_bits)
        if v2 >= SANS_ALPHABET:
            raise r.error("sANS symbol out of range")
        if v1 == v2:
            raise r.error("sANS two-symbol distribution with v1 == v2")
        weight = r.u(10)
        D[v1] = weight
        D[v2] = SANS_TOTAL - weight
        return SansDistribution(D)
    num_symbols = _read_prefix(r, SANS_NUM_SYMBOLS_CODE)
    codes = [_read_prefix(r, SANS_WEIGHT_CODE) for _ in range(num_symbols)]
    remainder = codes.index(max(codes))
    total = 0
    for index, code in enumerate(codes):
        if index == remainder or code == 0:
            continue
        if code == 1:
            D[index] = 1
            total += 1
            continue
        bits = code // 2
        shift = code - 1 - bits
        weight = (1 << (code - 1)) + (r.u(bits) << shift)
        D[index] = weight
        total += weight
    if total >= SANS_TOTAL:
        raise r.error("sANS weights exceed 1024")
    D[remainder] = SANS_TOTAL - total
    return SansDistribution(D)


class SansDecoder:
    __slots__ = ("reader", "state")

    def __init__(self, reader: BitReader):
        self.reader = reader
        self.state = reader.u(32)

    def read_symbol(self, d: SansDistribution) -> int:
        state = self.state
        x = state & 0x3FF
        t = d.resolve(x)
        o = x - (d.cumulative[t] - d.counts[t])
        state = o + d.counts[t] * (state >> 10)
        if state < 0x10000:
            state = (state << 16) | self.reader.u(16)
        self.state = state
        return t

    def check_final(self) -> None:
        if self.state != ANS_FINAL_STATE:
            raise self.reader.error(f"sANS final state {self.state:#x} != 0x130000")


# ---------------------------------------------------------------------------
# ABRAC / BEGABRAC

BEGABRAC_N = 64
CTX_ZERO = 0
CTX_SIGN = 1
CTX_EXP = 2
CTX_MANT = CTX_EXP + BEGABRAC_N - 1
CTX_LEN = CTX_MANT + BEGABRAC_N


def init_begabrac(init_ac_zero: int) -> list[int]:
    """Fresh BEGABRAC chance array: [zero, sign, exponent..., mantissa...]."""
    ctx = [0] * CTX_LEN
    ctx[CTX_ZERO] = init_ac_zero
    ctx[CTX_SIGN] = 2048
    c = 4096 - init_ac_zero
    for i in range(BEGABRAC_N - 1):
        if c < 256:
            c = 256
        if c > 3840:
            c = 3840
        ctx[CTX_EXP + i] = 4096 - c
        c = (c * c + 2048) >> 12
    for i in range(BEGABRAC_N):
        ctx[CTX_MANT + i] = 1024
    return ctx


class AbracDecoder:
    __slots__ = ("reader", "range", "low")

    def __init__(self, reader: BitReader):
        self.reader = reader
        self.range = 1 << 24
        low = reader.u(8) << 16
        low |= reader.u(8) << 8
        low |= reader.u(8)
        self.low = low

    def get_bit(self, c: int) -> int:
        rng = self.range
        low = self.low
        nc = (rng * c) >> 12
        if low >= rng - nc:
            bit = 1
            low -= rng - nc
            rng = nc
        else:
            bit = 0
            rng -= nc
        while rng <= 0x10000:
            low = (low << 8) | self.reader.u(8)
            rng <<= 8
        self.range = rng
        self.low = low
        return bit

    def get_adaptive_bit(self, chances: list[int], i: int) -> int:
        ac = chances[i]
        if self.get_bit(ac):
            chances[i] = ac + ((4096 - ac) >> 5)
            return 1
        chances[i] = ac - (ac >> 5)
        return 0

    def read_begabrac(self, ctx: list[int], lower: int, upper: int) -> int:
        bit = self.get_adaptive_bit
        if bit(ctx, CTX_ZERO):
            value = 0
        else:
            if lower < 0:
                sign = bit(ctx, CTX_SIGN) if upper > 0 else 0
            else:
                sign = 1
            mx = upper if sign else -lower
            emax = mx.bit_length() - 1
            if emax >= BEGABRAC_N:
                raise self.reader.error("BEGABRAC bound too large")
            exp = 0
            while exp < emax:
                if bit(ctx, CTX_EXP + exp):
                    break
                exp += 1
            v = 1 << exp
            for i in range(exp - 1, -1, -1):
                one = v | (1 << i)
                if one > mx:
                    continue
                if bit(ctx, CTX_MANT + i):
                    v = one
            value = v if sign else -v
        if value < lower or value > upper:
            raise self.reader.error("BEGABRAC value outside its bounds")
        return value


# ---------------------------------------------------------------------------
# MA trees

ZERO_INIT = (4, 128, 512, 1024, 1536, 2048, 2560, 3072, 3584, 3968, 4088)
SIGN_INIT = (512, 1024, 1536, 2048, 2560, 3072, 3584)
MA_TREE_INIT_ZERO = 1024
MAX_TREE_NODES = 1 << 16


@dataclass
class MaTree:
    """Flat MA tree.

    ``nodes[i]`` is ``(property, value, left, right)`` for decision nodes and
    ``(-1, leaf_index, 0, 0)`` for leaves.  ``leaf_contexts[k]`` holds the
    BEGABRAC chances of leaf ``k`` (depth-first numbering).
    """

    nodes: list = field(default_factory=list)
    leaf_contexts: list = field(default_factory=list)

    @property
    def num_leaves(self) -> int:
        return len(self.leaf_contexts)

    @property
    def is_single_leaf(self) -> bool:
        return len(self.nodes) == 1

    def lookup(self, properties) -> int:
        nodes = self.nodes
        node = nodes[0]
        while node[0] >= 0:
            node = nodes[node[2] if properties[node[0]] > node[1] else node[3]]
        return node[1]

    def used_properties(self) -> set[int]:
        return {n[0] for n in self.nodes if n[0] >= 0}


def decode_ma_tree(dec: AbracDecoder, ranges, signal_initialization: bool) -> MaTree:
    """Read a depth-first MA tree.

    ``ranges`` is one ``(min, max)`` per property; its length is n + 13, so
    property indices in [0, n + 12) can be signalled.
    """
    ctxs = [init_begabrac(MA_TREE_INIT_ZERO) for _ in range(4)]
    top_prop = len(ranges) - 1
    tree = MaTree()
    # stack of (node index to fill, ranges for that subtree)
    tree.nodes.append(None)
    stack = [(0, [tuple(rg) for rg in ranges])]
    while stack:
        slot, rngs = stack.pop()
        prop = dec.read_begabrac(ctxs[0], 0, top_prop) - 1
        if prop < 0:
            if signal_initialization:
                zc = dec.read_begabrac(ctxs[1], -5, 5) + 5
                leaf = init_begabrac(ZERO_INIT[zc])
                if zc < 3:
                    leaf[CTX_SIGN] = SIGN_INIT[dec.read_begabrac(ctxs[2], -3, 3) + 3]
            else:
                leaf = None
            tree.nodes[slot] = (-1, len(tree.leaf_contexts), 0, 0)
            tree.leaf_contexts.append(leaf)
            continue
        lo, hi = rngs[prop]
        if lo > hi - 1:
            raise dec.reader.error("MA tree split on an exhausted property range")
        value = dec.read_begabrac(ctxs[3], lo, hi - 1)
        left = len(tree.nodes)
        tree.nodes.extend((None, None))
        if len(tree.nodes) > MAX_TREE_NODES:
            raise dec.reader.error("MA tree too large")
        tree.nodes[slot] = (prop, value, left, left + 1)
        left_ranges = list(rngs)
        left_ranges[prop] = (value + 1, hi)
        right_ranges = list(rngs)
        right_ranges[prop] = (lo, value)
        stack.append((left + 1, right_ranges))
        stack.append((left, left_ranges))
    return tree
