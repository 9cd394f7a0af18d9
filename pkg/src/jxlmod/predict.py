"""Predictors: the adaptive sub-predictor selector and the weighted,
self-correcting predictor used by the lossless mode (8- and 16-bit)."""
from __future__ import annotations

import math

from .errors import IllFormed

ERR_UNAVAILABLE = (1 << 16) - 1
ERR_UNKNOWN = (1 << 16) - 2


def idiv(a: int, b: int) -> int:
    """Integer division truncating toward zero."""
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b > 0) else -q


def unpack_signed(u: int) -> int:
    return u >> 1 if u & 1 == 0 else -((u + 1) >> 1)


def pack_signed(v: int) -> int:
    return 2 * v if v >= 0 else -2 * v - 1


def clamp(x, lo, hi):
    return lo if x < lo else hi if x > hi else x


# ---------------------------------------------------------------------------
# adaptive predictor

def _avg(a, b):
    return idiv(a + b, 2)


def _grad(n, w, l):
    return clamp(n + w - l, min(n, w, l), max(n, w, l))


# each entry: (needed neighbours, function of (w, l, n, r))
Y_PREDICTORS = [
    ("nwr", lambda w, l, n, r: _avg(_avg(n, w), r)),
    ("wn", lambda w, l, n, r: _avg(w, n)),
    ("nr", lambda w, l, n, r: _avg(n, r)),
    ("wl", lambda w, l, n, r: _avg(w, l)),
    ("nl", lambda w, l, n, r: _avg(n, l)),
    ("w", lambda w, l, n, r: w),
    ("nwl", lambda w, l, n, r: _grad(n, w, l)),
    ("n", lambda w, l, n, r: n),
]

XB_PREDICTORS = [
    ("nwl", lambda w, l, n, r: _grad(n, w, l)),
    ("wn", lambda w, l, n, r: _avg(w, n)),
    ("n", lambda w, l, n, r: n),
    ("rn", lambda w, l, n, r: _avg(r, n)),
    ("w", lambda w, l, n, r: w),
    ("wl", lambda w, l, n, r: _avg(w, l)),
    ("r", lambda w, l, n, r: r),
    ("nwr", lambda w, l, n, r: _avg(_avg(n, w), r)),
]


def pack_signed_error(ev: int, dv: int) -> int:
    d = clamp(ev - dv, -32768, 32767)
    return pack_signed(d)


def pack_signed_decode(ev: int, residual: int) -> int:
    return ev + unpack_signed(residual)


def pack_signed_range_error(ev: int, dv: int, lo: int, hi: int) -> int:
    if ev == lo:
        return dv - lo
    if ev == hi:
        return hi - dv
    return pack_signed_error(ev, dv)


def pack_signed_range_decode(ev: int, residual: int, lo: int, hi: int) -> int:
    if ev == lo:
        return ev + residual
    if ev == hi:
        return ev - residual
    return pack_signed_decode(ev, residual)


def get_context(c: int, me: int, nc: int) -> int:
    if nc == 0:
        return c * 12 + min((me + 1) >> 1, 8) - 1
    return c * 12 + 8 + (8 - nc).bit_length()  # ceil(log2(9 - nc))


class AdaptivePredictor:
    """Raster-order adaptive predictor over one channel.

    Call :meth:`step` for (x, y) to get ``(ev, me, nc)``, then
    :meth:`record` with the decoded value before moving on.
    """

    def __init__(self, width: int, height: int, kind: str = "Y", value_range=None):
        self.width = width
        self.height = height
        self.subs = Y_PREDICTORS if kind == "Y" else XB_PREDICTORS
        self.value_range = value_range
        self.values = [[0] * width for _ in range(height)]
        # errors[y][x][k]: error of sub-predictor k at (x, y), None if unavailable
        self.errors = [[None] * width for _ in range(height)]
        self._pending = None

    def _sample(self, x, y):
        if 0 <= x < self.width and 0 <= y < self.height:
            return self.values[y][x]
        return None

    def _expected(self, x, y):
        nb = {"w": self._sample(x - 1, y), "l": self._sample(x - 1, y - 1),
              "n": self._sample(x, y - 1), "r": self._sample(x + 1, y - 1)}
        out = []
        for needs, fn in self.subs:
            if any(nb[c] is None for c in needs):
                out.append(None)
            else:
                out.append(fn(nb["w"], nb["l"], nb["n"], nb["r"]))
        return out

    def estimates(self, x, y, expected=None):
        if expected is None:
            expected = self._expected(x, y)
        est = []
        for k, ev in enumerate(expected):
            if ev is None:
                est.append(ERR_UNAVAILABLE)
                continue
            best = None
            for nx, ny in ((x, y - 1), (x - 1, y - 1), (x - 1, y)):
                if 0 <= nx < self.width and 0 <= ny < self.height:
                    e = self.errors[ny][nx][k]
                    if e is not None and (best is None or e > best):
                        best = e
            est.append(ERR_UNKNOWN if best is None else best)
        return est

    def step(self, x: int, y: int) -> tuple[int, int, int]:
        expected = self._expected(x, y)
        est = self.estimates(x, y, expected)
        me = min(est)
        nc = sum(1 for e in est if e == 0)
        ev = 0
        if any(e is not None for e in expected):
            best = None
            for k, e in enumerate(est):
                if expected[k] is not None and (best is None or e < est[best]):
                    best = k
            ev = expected[best]
        self._pending = (x, y, expected)
        return ev, me, nc

    def record(self, x: int, y: int, value: int) -> None:
        px, py, expected = self._pending
        if (px, py) != (x, y):
            raise ValueError("record() must follow step() for the same sample")
        self.values[y][x] = value
        errs = []
        for ev in expected:
            if ev is None:
                errs.append(None)
            elif self.value_range is None:
                errs.append(pack_signed_error(ev, value))
            else:
                errs.append(pack_signed_range_error(ev, value, *self.value_range))
        self.errors[y][x] = errs


# ---------------------------------------------------------------------------
# weighted predictor

PM_REGULAR, PM_WEST, PM_NORTH = 0, 1, 2

# per mode: weight multipliers 0..3, NE multiplier, sum_weights_shift, NW_mult
_MODE_TABLES = {
    PM_REGULAR: ((34, 31, 33, 36, 39, 42, 43, 43), (36, 37, 37, 40, 44, 46, 47, 42),
                 (32,) * 8, (28, 24, 24, 24, 23, 23, 25, 32),
                 (0, 15, 19, 16, 12, 12, 11, 11), 3, 20),
    PM_WEST: ((27, 33, 40, 43, 52, 59, 63, 65), (31, 31, 34, 36, 43, 45, 43, 28),
              (32,) * 8, (31, 31, 29, 28, 26, 28, 32, 43),
              (0, 21, 19, 13, 14, 24, 26, 35), 1, 1),
    PM_NORTH: ((43, 38, 35, 34, 35, 33, 28, 23), (23, 21, 24, 27, 29, 31, 31, 31),
               (32,) * 8, (27, 23, 26, 29, 30, 35, 40, 51),
               (0, 29, 34, 29, 13, 13, 11, 9), 1, 23),
}

MULT16 = (
    (30, 0, 28, 0, 4, 0, 4, 0, 8, 11, 11, 14, 15, 21, 21, 21, 22, 23),
    (33,) * 18,
    (31, 0, 31, 0, 31, 0, 34, 0, 35, 32, 33, 33, 33, 31, 28, 25, 22, 9),
    (30, 0, 32, 0, 56, 0, 57, 0, 51, 51, 50, 44, 44, 35, 34, 31, 29, 25),
)

_E2W8: list[int] = []


def error2weight8(err_sum: int) -> int:
    if err_sum < len(_E2W8):
        return _E2W8[err_sum]
    while len(_E2W8) <= err_sum:
        e = len(_E2W8)
        _E2W8.append(int(math.floor(150 * 512 / (58 + e * math.sqrt(e + 50)))) & 0xFFFF)
    return _E2W8[err_sum]


def error2weight16(err_sum: int) -> int:
    return 0xFFFF if err_sum == 0 else (180 * 256) // err_sum


def quantize_error8(error: int) -> int:
    error = (error + 1) >> 1
    res = 4 if error >= 4 else error
    if error >= 6:
        res = 5
    if error >= 9:
        res = 6
    if error >= 15:
        res = 7
    return res * 2


def quantize_error16(error: int) -> int:
    # doubling buckets: 0, 1, 2-3, 4-7, ... capped at 13
    return min(13, error.bit_length())


def restore_true_value(p: int, d: int, max_value: int) -> int:
    """Map code ``d`` around prediction ``p`` back to a value in [0, max_value].

    Codes up to 2*min(p, max_value - p) alternate around ``p``; the rest
    run monotonically through the values on the wider side.
    """
    if d < 0 or d > max_value:
        raise IllFormed(f"residual {d} exceeds the channel range {max_value}")
    p = clamp(p, 0, max_value)
    m = min(p, max_value - p)
    if d <= 2 * m:
        return p + unpack_signed(d)
    if p <= max_value - p:
        return d
    return max_value - d


def pack_true_value(p: int, value: int, max_value: int) -> int:
    """Inverse of :func:`restore_true_value`."""
    p = clamp(p, 0, max_value)
    m = min(p, max_value - p)
    diff = value - p
    if -m <= diff <= m:
        return pack_signed(diff)
    if p <= max_value - p:
        return value
    return max_value - value


class WeightedPredictor:
    """Self-correcting weighted predictor over one channel of one group.

    ``predict(x, y)`` returns ``(prediction, max_error, sub_predictions)``;
    after the sample is known, ``update`` stores its errors.  Samples must be
    visited in raster order.
    """

    def __init__(self, xsize: int, ysize: int, bits16: bool, max_value: int, mode: int = PM_REGULAR):
        self.xsize = xsize
        self.ysize = ysize
        self.bits16 = bits16
        self.max_value = max_value
        self.mode = 0 if bits16 else mode
        if self.mode not in _MODE_TABLES:
            raise IllFormed(f"prediction mode {mode} not in [0, 3)")
        self.pbits = 0 if bits16 else 3
        self.pround = (1 << self.pbits) >> 1
        self.proundm1 = max(0, self.pround - 1)
        n = xsize * ysize
        self.true_value = [0] * n
        self.true_error = [0] * n
        self.sub_error = [[0] * n for _ in range(4)]
        self.quantized_error = [0] * n

    def predict(self, x: int, y: int):
        if self.bits16:
            return self._predict16(x, y)
        return self._predict8(x, y)

    def _predict8(self, x, y):
        P = self.pbits
        xs = self.xsize
        i = y * xs + x
        tv = self.true_value
        qe = self.quantized_error
        top = self.max_value << P
        if x == 0 and y == 0:
            p = 27 << P
            return clamp(p, 0, top), 14, (p, p, p, p)
        if y == 0:
            W = tv[i - 1] << P
            WW = (tv[i - 2] << P) if x >= 2 else W
            qww = qe[i - 2] if x >= 2 else qe[i - 1]
            p0 = W + idiv((W - WW) * 5, 16)
            return clamp(p0, 0, top), max(qe[i - 1], qww), (p0, W, W, W)
        if x == 0:
            N = tv[i - xs] << P
            has_ne = x + 1 < xs
            NE = (tv[i - xs + 1] << P) if has_ne else N
            qne = qe[i - xs + 1] if has_ne else qe[i - xs]
            p0 = (N * 7 + NE + 4) >> 3
            return p0, max(qe[i - xs], qne), (p0, N, N, N)

        n_i = i - xs
        w_i = i - 1
        nw_i = n_i - 1
        has_ne = x + 1 < xs
        ne_i = n_i + 1 if has_ne else n_i
        N = tv[n_i] << P
        W = tv[w_i] << P
        NW = tv[nw_i] << P
        NE = tv[ne_i] << P
        NN = (tv[n_i - xs] << P) if y >= 2 else N
        te = self.true_error
        teN, teW, teNW, teNE = te[n_i], te[w_i], te[nw_i], te[ne_i]
        mode = self.mode
        if mode == PM_REGULAR:
            p0 = W - (teW + teN + teNW)
            p1 = N - idiv(teW + teN + teNE, 4)
            p2 = W + NE - N
            p3 = N + idiv((N - NN) * 23, 32) + idiv(W - NW, 16) - ((teNE * 3 + teNW * 4 + 7) >> 5)
        elif mode == PM_WEST:
            p0 = W - idiv((teW + teN + teNW) * 9, 32)
            p1 = N - idiv((teW + teN + teNE) * 171, 512)
            p2 = W + NE - N
            p3 = N + ((N - NN) >> 1) + idiv((W - NW) * 19 - teNW * 13, 64)
        else:
            p0 = N - idiv(teW + teN + teNW + teNE, 4)
            p1 = W - ((teW * 2 + teNW) >> 2)
            p2 = W + NE - N
            p3 = N + idiv((N - NN) * 47, 64) - (teN >> 2)
        m0, m1, m2, m3, mne, sws, nw_mult = _MODE_TABLES[mode]

        qe = self.quantized_error
        mxe = max(qe[w_i], qe[n_i], qe[nw_i])
        if has_ne:
            mxe = max(mxe, qe[ne_i])
        if x > 1:
            mxe = max(mxe, qe[w_i - 1])
        k = mxe >> 1
        preds = (p0, p1, p2, p3)
        mults = (m0[k], m1[k], m2[k], m3[k])
        sws_total = 0
        acc = 0
        for j in range(4):
            se = self.sub_error[j]
            sN, sW, sNW = se[n_i], se[w_i], se[nw_i]
            sNE = se[n_i + 1] if has_ne else 0
            sWW = se[w_i - 1] if x >= 2 else 0
            if mode == PM_NORTH:
                es = (((sN + sW) * 3) >> 1) + sNW + sWW + sNE
            else:
                es = sN + sW + sNW + sWW + sNE
            wgt = error2weight8(es) * mults[j]
            sws_total += wgt
            acc += preds[j] * wgt
        pred = idiv(acc + (sws_total >> sws), sws_total)
        if ((teN ^ teW) | (teN ^ teNW)) > 0:
            pred = clamp(pred, 0, top)
        else:
            pred = clamp(pred, min(W, N, NE), max(W, N, NE))

        max_error = mxe
        if max_error != 0:
            if (teW + teN) * 40 + teNW * nw_mult + teNE * mne[k] <= 0:
                max_error += 1
        elif N == W and N == NE:
            max_error = 16 if ((teW + teN) | teNE | teNW) == 0 else 1
        return pred, max_error, preds

    def _predict16(self, x, y):
        xs = self.xsize
        i = y * xs + x
        tv = self.true_value
        qe = self.quantized_error
        top = self.max_value
        if x == 0 and y == 0:
            return clamp(3584, 0, top), 17, (3584,) * 4
        if y == 0:
            W = tv[i - 1]
            WW = tv[i - 2] if x >= 2 else W
            qww = qe[i - 2] if x >= 2 else qe[i - 1]
            p0 = W + idiv(W - WW, 4)
            return clamp(p0, 0, top), max(qe[i - 1], qww), (p0,) * 4
        if x == 0:
            N = tv[i - xs]
            has_ne = x + 1 < xs
            NE = tv[i - xs + 1] if has_ne else N
            qne = qe[i - xs + 1] if has_ne else qe[i - xs]
            p1 = (N * 3 + NE + 2) >> 2
            return p1, max(qe[i - xs], qne), (N, p1, N, N)

        n_i = i - xs
        w_i = i - 1
        nw_i = n_i - 1
        has_ne = x + 1 < xs
        ne_i = n_i + 1 if has_ne else n_i
        N, W, NE = tv[n_i], tv[w_i], tv[ne_i]
        te = self.true_error
        teN, teW, teNW, teNE = te[n_i], te[w_i], te[nw_i], te[ne_i]
        p0 = N - idiv((teW + teN) * 3, 4)
        p1 = W - idiv((teW + teN + teNW) * 5, 16)
        p2 = W + (((NE - N) * 13 + 8) >> 4)
        p3 = N - idiv((teN + teNW + teNE) * 7, 32)
        mxe = max(qe[w_i], qe[n_i], qe[nw_i])
        if has_ne:
            mxe = max(mxe, qe[ne_i])
        if x > 1:
            mxe = max(mxe, qe[w_i - 1])
        preds = (p0, p1, p2, p3)
        total = 0
        acc = 0
        for j in range(4):
            se = self.sub_error[j]
            sNE = se[n_i + 1] if has_ne else 0
            sWW = se[w_i - 1] if x >= 2 else 0
            es = (((se[n_i] + se[w_i]) * 9) >> 3) + se[nw_i] + sWW + sNE
            wgt = error2weight16(es) * MULT16[j][mxe]
            if j == 1:
                wgt += 1
            total += wgt
            acc += preds[j] * wgt
        pred = idiv(acc + (total >> 2), total)
        pred = clamp(pred, min(N + 1, W, NE), max(N - 1, W, NE))
        if mxe and mxe <= 8:
            if teW + teN * 2 + teNW + teNE < 0:
                mxe -= 1
        return pred, mxe, preds

    def restore(self, prediction: int, d: int) -> int:
        return restore_true_value((prediction + self.proundm1) >> self.pbits, d, self.max_value)

    def residual(self, prediction: int, value: int) -> int:
        return pack_true_value((prediction + self.proundm1) >> self.pbits, value, self.max_value)

    def update(self, x: int, y: int, prediction: int, preds, d: int, value: int) -> None:
        i = y * self.xsize + x
        P = self.pbits
        self.true_value[i] = value
        self.true_error[i] = prediction - (value << P)
        if self.bits16:
            for j in range(4):
                self.sub_error[j][i] = min(0x3FBF, abs(preds[j] - value))
            self.quantized_error[i] = quantize_error16(d)
        else:
            r = self.pround
            for j in range(4):
                self.sub_error[j][i] = min(101, abs(((preds[j] + r) >> P) - value))
            self.quantized_error[i] = quantize_error8(d)
