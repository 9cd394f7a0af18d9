import random
from collections import Counter

import pytest

from jxlmod.bitio import BitReader, BitWriter, write_u8
from jxlmod.entropy import (
    ANS_FINAL_STATE, CTX_SIGN, ZERO_INIT, AbracDecoder, AliasTable, AnsDecoder, SansDecoder,
    decode_clustered_distributions, decode_cluster_map, decode_distribution, decode_hybrid_uint,
    decode_ma_tree, decode_permutation, init_begabrac, inverse_move_to_front,
    sans_decode_distribution,
)
from jxlmod.errors import EncoderError, IllFormed
from jxlmod.refcodec.entropy import (
    AbracEncoder, AnsStreamBuilder, Leaf, Split, abrac_encode, ans_encode, begabrac_encode,
    encode_cluster_map, encode_distribution, encode_ma_tree, encode_permutation, hybrid_uint_split,
    normalize_counts, sans_encode, sans_encode_distribution, sans_quantize, write_ans_ops,
)

from streams import pack


def random_counts(rng, alphabet=None):
    alphabet = alphabet or rng.randint(1, 256)
    hist = [rng.choice([0, 0, 1, rng.randint(1, 1000)]) for _ in range(alphabet)]
    if not any(hist):
        hist[rng.randrange(alphabet)] = 1
    return normalize_counts(hist)


def alias_is_consistent(counts):
    t = AliasTable(counts)
    per = {}
    for s, o in zip(t.symbols, t.offsets):
        per.setdefault(s, []).append(o)
    full = counts + [0] * (256 - len(counts))
    return all(sorted(per.get(s, [])) == list(range(c)) for s, c in enumerate(full))


def test_alias_single_symbol():
    counts = [0] * 256
    counts[9] = 4096
    t = AliasTable(counts)
    assert set(t.symbols) == {9}
    assert sorted(t.offsets) == list(range(4096))


def test_alias_two_halves():
    t = AliasTable([2048, 2048])
    assert Counter(t.symbols) == {0: 2048, 1: 2048}
    assert alias_is_consistent([2048, 2048])


def test_alias_random():
    rng = random.Random(1)
    for _ in range(100):
        assert alias_is_consistent(random_counts(rng))


def test_alias_rejects_bad_sum():
    with pytest.raises(IllFormed):
        AliasTable([4095])


def test_ans_single_symbol_any_state():
    counts = [0] * 256
    counts[3] = 4096
    t = AliasTable(counts)
    for state in (0x10000, 0x12345678, 0xFFFFFFFF):
        dec = AnsDecoder(BitReader(state.to_bytes(4, "little") + bytes(64)))
        assert [dec.read_symbol(t) for _ in range(20)] == [3] * 20


def test_ans_empty_stream_is_final_state():
    data = ans_encode([], [4096])
    assert data == ANS_FINAL_STATE.to_bytes(4, "little")
    AnsDecoder(BitReader(data)).check_final()


def test_ans_roundtrip_and_truncation():
    rng = random.Random(2)
    counts = random_counts(rng, 40)
    support = [i for i, c in enumerate(counts) if c]
    syms = [rng.choice(support) for _ in range(3000)]
    data = ans_encode(syms, counts)
    t = AliasTable(counts)
    r = BitReader(data)
    dec = AnsDecoder(r)
    assert [dec.read_symbol(t) for _ in syms] == syms
    dec.check_final()
    assert r.remaining_bits() == 0
    with pytest.raises(IllFormed):
        r = BitReader(data[:-2])
        dec = AnsDecoder(r)
        for _ in syms:
            dec.read_symbol(t)
        dec.check_final()


def test_ans_zero_probability_symbol():
    with pytest.raises(EncoderError):
        ans_encode([1], [4096])


def test_distribution_simple_one_symbol():
    w = BitWriter()
    w.write(1, 1)
    w.write(1, 0)
    write_u8(w, 7)
    d = decode_distribution(BitReader(w.getvalue()))
    assert d[7] == 4096 and sum(d) == 4096


def test_distribution_flat():
    w = BitWriter()
    w.write(1, 0)
    w.write(1, 1)
    write_u8(w, 2)
    assert decode_distribution(BitReader(w.getvalue()))[:4] == [1366, 1365, 1365, 0]


def test_distribution_two_equal_symbols():
    w = BitWriter()
    w.write(2, 3)
    write_u8(w, 5)
    write_u8(w, 5)
    w.write(12, 100)
    with pytest.raises(IllFormed):
        decode_distribution(BitReader(w.getvalue()))


def test_distribution_roundtrip_random():
    rng = random.Random(3)
    for _ in range(300):
        counts = random_counts(rng)
        w = BitWriter()
        encode_distribution(w, counts)
        d = decode_distribution(BitReader(w.getvalue()))
        assert d[:len(counts)] == counts and sum(d) == 4096


def test_cluster_map_simple_zero_bits():
    assert decode_cluster_map(BitReader(pack((1, 1), (2, 0))), 5) == [0] * 5


def test_cluster_map_complex_all_zero():
    # single-symbol distribution at 0, then an ANS stream that only yields 0
    w = BitWriter()
    w.write(1, 0)
    w.write(2, 1)
    write_u8(w, 0)
    write_ans_ops(w, [(AliasTable([4096]), 0)] * 6)
    assert decode_cluster_map(BitReader(w.getvalue()), 6) == [0] * 6


@pytest.mark.parametrize("cmap", [[0, 1, 2], [2, 0, 1, 1, 0, 2], [0] * 40 + [1] * 3 + [0] * 7 + [2],
                                  list(range(20)) + [3] * 30])
def test_cluster_map_roundtrip(cmap):
    w = BitWriter()
    encode_cluster_map(w, cmap)
    assert decode_cluster_map(BitReader(w.getvalue()), len(cmap)) == cmap


def test_cluster_map_unused_index():
    # simple path, nbits=1: [1, 1] never uses cluster 0
    with pytest.raises(IllFormed):
        decode_cluster_map(BitReader(pack((1, 1), (2, 1), (1, 1), (1, 1))), 2)


def test_inverse_mtf_matches_naive():
    rng = random.Random(4)
    for _ in range(200):
        vals = [rng.randrange(min(256, rng.choice([3, 20, 256]))) for _ in range(rng.randint(0, 60))]
        naive = list(range(256))
        expect = []
        for i in vals:
            v = naive.pop(i)
            naive.insert(0, v)
            expect.append(v)
        got = list(vals)
        inverse_move_to_front(got)
        assert got == expect


def test_hybrid_uint():
    assert decode_hybrid_uint(5, BitReader(b"")) == 5
    assert decode_hybrid_uint(16, BitReader(pack((3, 0)))) == 16
    assert decode_hybrid_uint(17, BitReader(pack((3, 7)))) == 31
    for v in [0, 15, 16, 31, 32, 1000, (1 << 32) - 1]:
        token, nb, extra = hybrid_uint_split(v)
        assert decode_hybrid_uint(token, BitReader(pack((nb, extra)))) == v


def test_hybrid_uint_stream():
    rng = random.Random(5)
    b = AnsStreamBuilder(3)
    vals = [(rng.randrange(3), rng.choice([rng.randrange(16), rng.randrange(1 << 24)])) for _ in range(500)]
    for ctx, v in vals:
        b.hybrid(ctx, v)
    w = BitWriter()
    b.write(w)
    r = BitReader(w.getvalue())
    tables = decode_clustered_distributions(r, 3).tables()
    dec = AnsDecoder(r)
    assert [dec.read_hybrid_uint(tables[c]) for c, _ in vals] == [v for _, v in vals]
    dec.check_final()


def _prefix_bits(code):
    w = BitWriter()
    for ch in code:
        w.write(1, int(ch))
    return w


def test_sans_prefix_tables():
    # "000" -> 10 symbols; each weight code "00" -> 6
    w = _prefix_bits("0" + "000" + "00" * 10)
    for _ in range(9):
        w.write(3, 0)
    d = sans_decode_distribution(BitReader(w.getvalue()))
    assert sum(d.counts) == 1024
    assert sum(1 for c in d.counts if c) == 10


def test_sans_simple_single():
    w = BitWriter()
    w.write(1, 1)
    w.write(1, 0)
    w.write(5, 0)
    d = sans_decode_distribution(BitReader(w.getvalue()))
    assert d.counts[0] == 1024
    dec = SansDecoder(BitReader(ANS_FINAL_STATE.to_bytes(4, "little")))
    assert [dec.read_symbol(d) for _ in range(5)] == [0] * 5
    dec.check_final()


def test_sans_equal_symbols():
    w = BitWriter()
    w.write(2, 3)
    w.write(5, 4)
    w.write(5, 4)
    w.write(10, 300)
    with pytest.raises(IllFormed):
        sans_decode_distribution(BitReader(w.getvalue()))


def test_sans_roundtrip():
    rng = random.Random(6)
    for _ in range(100):
        hist = [rng.choice([0, 1, 5, 100]) for _ in range(18)]
        if not any(hist):
            hist[0] = 1
        counts = sans_quantize(hist)
        w = BitWriter()
        sans_encode_distribution(w, counts)
        d = sans_decode_distribution(BitReader(w.getvalue()))
        assert d.counts == counts
        support = [i for i, c in enumerate(counts) if c]
        syms = [rng.choice(support) for _ in range(rng.randint(0, 500))]
        r = BitReader(sans_encode(syms, d))
        dec = SansDecoder(r)
        assert [dec.read_symbol(d) for _ in syms] == syms
        dec.check_final()
        assert r.remaining_bits() == 0


def test_abrac_chance_update():
    enc = AbracEncoder()
    ch = [2048, 2048]
    enc.put_adaptive_bit(ch, 0, 1)
    enc.put_adaptive_bit(ch, 1, 0)
    assert ch == [2112, 1984]
    dec = AbracDecoder(BitReader(enc.finish()))
    ch = [2048, 2048]
    assert (dec.get_adaptive_bit(ch, 0), dec.get_adaptive_bit(ch, 1)) == (1, 0)
    assert ch == [2112, 1984]


def test_abrac_fixed_chance_and_range_invariant():
    rng = random.Random(7)
    bits = [rng.randrange(2) for _ in range(5000)]
    data = abrac_encode([(b, 2048) for b in bits])
    dec = AbracDecoder(BitReader(data))
    out = []
    for _ in bits:
        out.append(dec.get_bit(2048))
        assert dec.range > 1 << 16
    assert out == bits
    assert abrac_encode([(0, 2048)] * 100)


def test_abrac_trace_equality():
    rng = random.Random(8)
    n = 2000
    bits = [rng.random() < 0.2 for _ in range(n)]
    enc = AbracEncoder()
    ech = [2048] * 4
    trace = []
    for i, b in enumerate(bits):
        enc.put_adaptive_bit(ech, i % 4, int(b))
        trace.append(tuple(ech))
    dec = AbracDecoder(BitReader(enc.finish()))
    dch = [2048] * 4
    for i, b in enumerate(bits):
        assert dec.get_adaptive_bit(dch, i % 4) == b
        assert tuple(dch) == trace[i]


def test_begabrac_exhaustive():
    vals = list(range(-17, 24))
    data = begabrac_encode(vals, [(-17, 23)] * len(vals))
    dec = AbracDecoder(BitReader(data))
    ctx = init_begabrac(2048)
    assert [dec.read_begabrac(ctx, -17, 23) for _ in vals] == vals


def test_begabrac_zero_and_unsigned():
    data = begabrac_encode([0, 5, 0, 9], [(0, 10)] * 4)
    dec = AbracDecoder(BitReader(data))
    ctx = init_begabrac(2048)
    assert [dec.read_begabrac(ctx, 0, 10) for _ in range(4)] == [0, 5, 0, 9]
    # with lower == 0 the sign chance is never touched
    assert ctx[CTX_SIGN] == 2048


def test_begabrac_out_of_bounds_rejected():
    with pytest.raises(EncoderError):
        begabrac_encode([11], [(0, 10)])


def test_init_begabrac_clamps():
    ctx = init_begabrac(2048)
    assert all(256 <= 4096 - c <= 3840 for c in ctx[2:2 + 63])


RANGES = [(0, 3), (-5, 5), (0, 255), (-10, 10)]


def _tree_roundtrip(spec, signal):
    enc = AbracEncoder()
    want = encode_ma_tree(enc, spec, RANGES, signal)
    dec = AbracDecoder(BitReader(enc.finish() + bytes(4)))
    return want, decode_ma_tree(dec, RANGES, signal)


def test_ma_tree_single_leaf():
    want, got = _tree_roundtrip(Leaf(), False)
    assert got.is_single_leaf and got.nodes == want.nodes


def test_ma_tree_zero_init():
    assert ZERO_INIT[3] == 1024
    _, got = _tree_roundtrip(Leaf(zc=3), True)
    assert got.leaf_contexts[0] == init_begabrac(1024)


def test_ma_tree_two_levels():
    spec = Split(1, 0, Split(2, 100, Leaf(zc=1, sign=2), Leaf()), Split(0, 1, Leaf(), Leaf(zc=9)))
    want, got = _tree_roundtrip(spec, True)
    assert got.nodes == want.nodes and got.leaf_contexts == want.leaf_contexts
    assert got.num_leaves == 4
    # left iff property > value
    assert got.lookup([0, 3, 200, 0]) == 0
    assert got.lookup([0, 3, 50, 0]) == 1
    assert got.lookup([2, -1, 0, 0]) == 2
    assert got.lookup([1, -1, 0, 0]) == 3


def test_ma_tree_exhausted_range():
    enc = AbracEncoder()
    ctxs = [init_begabrac(1024) for _ in range(4)]
    enc.put_begabrac(ctxs[0], 0, 3, 1)     # split on property 0 with range (0, 0)
    enc.put_begabrac(ctxs[0], 0, 3, 0)
    with pytest.raises(IllFormed):
        decode_ma_tree(AbracDecoder(BitReader(enc.finish() + bytes(4))), [(0, 0), (0, 1), (0, 1), (0, 1)], False)


def _perm_roundtrip(perm, skip=0):
    w = BitWriter()
    encode_permutation(w, perm, skip)
    r = BitReader(w.getvalue())
    dists = decode_clustered_distributions(r, 8)
    dec = AnsDecoder(r)
    out = decode_permutation(r, dec, dists, len(perm), skip)
    dec.check_final()
    return out


def test_permutations():
    assert _perm_roundtrip(list(range(7))) == list(range(7))
    assert _perm_roundtrip([1, 0]) == [1, 0]
    assert _perm_roundtrip([0, 1, 2, 5, 3, 4], skip=3) == [0, 1, 2, 5, 3, 4]
    rng = random.Random(9)
    for _ in range(50):
        p = list(range(rng.randint(1, 300)))
        rng.shuffle(p)
        assert _perm_roundtrip(p) == p
