import hashlib
import random

import pytest

from jxlmod.errors import IllFormed
from jxlmod.predict import (
    ERR_UNAVAILABLE, ERR_UNKNOWN, XB_PREDICTORS, Y_PREDICTORS, AdaptivePredictor,
    WeightedPredictor, error2weight16, get_context, pack_signed, pack_signed_decode, pack_signed_error,
    pack_signed_range_decode, pack_signed_range_error, pack_true_value, quantize_error8,
    quantize_error16, restore_true_value, unpack_signed,
)


def test_pack_signed_pair():
    assert [pack_signed(v) for v in (0, -1, 1, -2, 2)] == [0, 1, 2, 3, 4]
    assert all(unpack_signed(pack_signed(v)) == v for v in range(-300, 300))


def test_top_left_adaptive():
    p = AdaptivePredictor(4, 4)
    ev, me, nc = p.step(0, 0)
    assert ev == 0 and me == ERR_UNAVAILABLE and nc == 0


def test_constant_image_adaptive():
    p = AdaptivePredictor(5, 5, "XB")
    for y in range(5):
        for x in range(5):
            ev, me, nc = p.step(x, y)
            if x >= 2 and y >= 2 and x < 4:
                # every sub-predictor available and exact so far
                assert (ev, me, nc) == (9, 0, 8)
            p.record(x, y, 9)


def test_crafted_gradient_wins():
    img = [[5, 10, 0], [2, 7, 9], [4, 6, 1]]
    p = AdaptivePredictor(3, 3, "XB")
    for y in range(3):
        for x in range(3):
            ev, me, nc = p.step(x, y)
            if (x, y) == (1, 2):
                n, w, l = img[1][1], img[2][0], img[1][0]
                assert ev == max(min(n, w, l), min(max(n, w, l), n + w - l)) == 7
                assert (me, nc) == (0, 1)
            p.record(x, y, img[y][x])


def test_availability_matches_bounds():
    for subs, kind in ((Y_PREDICTORS, "Y"), (XB_PREDICTORS, "XB")):
        p = AdaptivePredictor(4, 3, kind)
        for y in range(3):
            for x in range(4):
                expected = p._expected(x, y)
                have = {"w": x > 0, "l": x > 0 and y > 0, "n": y > 0, "r": y > 0 and x + 1 < 4}
                for (needs, _), ev in zip(subs, expected):
                    assert (ev is not None) == all(have[c] for c in needs)
                p.step(x, y)
                p.record(x, y, x * y)
    assert ERR_UNKNOWN == ERR_UNAVAILABLE - 1


def test_pack_signed_metrics():
    assert pack_signed_decode(17, 0) == 17
    assert pack_signed_range_decode(0, 5, 0, 255) == 5
    assert pack_signed_range_decode(255, 5, 0, 255) == 250
    assert pack_signed_decode(10, 3) == 8
    # the error estimate is taken on expected - decoded
    assert pack_signed_error(10, 7) == 6 and pack_signed_error(7, 10) == 5
    assert pack_signed_error(40000, 0) == 2 * 32767
    assert pack_signed_range_error(0, 9, 0, 255) == 9
    assert pack_signed_range_error(255, 250, 0, 255) == 5
    assert pack_signed_range_error(3, 5, 0, 255) == 3


def test_get_context():
    assert get_context(0, 5, 8) == 8
    assert get_context(0, 1, 0) == 0
    assert get_context(2, 17, 0) == 31
    for c in range(3):
        for nc in range(9):
            for me in range(1, 40):
                assert c * 12 <= get_context(c, me, nc) <= c * 12 + 11


def test_weighted_top_left_constants():
    pred, max_error, subs = WeightedPredictor(8, 8, False, 255).predict(0, 0)
    assert pred == 27 << 3 and max_error == 14
    pred, max_error, subs = WeightedPredictor(8, 8, True, 65535).predict(0, 0)
    assert pred == 3584 and subs == (3584,) * 4 and max_error == 17
    assert error2weight16(0) == 0xFFFF


def test_quantize_error():
    assert quantize_error8(0) == 0
    values = {quantize_error8(e) for e in range(0, 5000)}
    assert values <= set(range(0, 15, 2))
    assert {quantize_error16(e) for e in range(0, 70000, 7)} <= set(range(14))


def test_restore_true_value_is_bijective():
    for max_value in (0, 1, 2, 7, 255):
        for p in range(-3, max_value + 4):
            got = sorted(restore_true_value(p, d, max_value) for d in range(max_value + 1))
            assert got == list(range(max_value + 1))
            for v in range(max_value + 1):
                assert restore_true_value(p, pack_true_value(p, v, max_value), max_value) == v
    with pytest.raises(IllFormed):
        restore_true_value(3, 8, 7)


def _trace(bits16, mode, seed=0, n=32):
    rng = random.Random(seed)
    top = 65535 if bits16 else 255
    wp = WeightedPredictor(n, n, bits16, top, mode)
    out = []
    img = [[(x * 7 + y * 3 + rng.randint(-9, 9)) % (top + 1) for x in range(n)] for y in range(n)]
    for y in range(n):
        for x in range(n):
            pred, me, subs = wp.predict(x, y)
            if not bits16:
                assert 0 <= pred <= top << 3
            v = img[y][x]
            d = wp.residual(pred, v)
            got = wp.restore(pred, d)
            assert got == v
            wp.update(x, y, pred, subs, d, v)
            out.append((pred, me))
    return out


@pytest.mark.parametrize("bits16,mode", [(False, 0), (False, 1), (False, 2), (True, 0)])
def test_weighted_trace_deterministic(bits16, mode):
    a = _trace(bits16, mode)
    assert a == _trace(bits16, mode)
    assert hashlib.sha256(repr(a).encode()).hexdigest() == hashlib.sha256(repr(_trace(bits16, mode)).encode()).hexdigest()


def test_unknown_prediction_mode():
    with pytest.raises(IllFormed):
        WeightedPredictor(4, 4, False, 255, 3)
