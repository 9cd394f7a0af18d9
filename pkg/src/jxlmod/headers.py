"""Header bundles, frame headers and the TOC.

Each bundle is declared once as a list of :class:`Field` rows (condition,
codec, default, name), and that single table drives both ``decode`` and
``encode`` so the two can never drift apart.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Any, Callable, Optional

from .bitio import (
    Bits, BitsOffset, BitReader, BitWriter, Val, read_enum, read_f16, read_s32,
    read_u32, read_u64, write_enum, write_f16, write_s32, write_u32, write_u64,
)
from .errors import EncoderError, IllFormed

K_GROUP_DIM = 256


# ---------------------------------------------------------------------------
# enums

class ColourSpace(IntEnum):
    kRGB = 0
    kGrey = 1
    kXYB = 2
    kUnknown = 3
    kXYZ = 4


class WhitePoint(IntEnum):
    kD65 = 1
    kCustom = 2
    kE = 10
    kDCI = 11


class Primaries(IntEnum):
    kSRGB = 1
    kCustom = 2
    k2100 = 9
    kP3 = 11


class TransferFunction(IntEnum):
    k709 = 1
    kUnknown = 2
    kLinear = 8
    kSRGB = 13
    kPQ = 16
    kDCI = 17
    kHLG = 18


class RenderingIntent(IntEnum):
    kPerceptual = 0
    kRelative = 1
    kSaturation = 2
    kAbsolute = 3


class FrameEncoding(IntEnum):
    kLossless = 0
    kPasses = 1
    kModular = 2
    kModularGroup = 3


class Flags(IntEnum):
    kNoise = 1
    kSkipDots = 2
    kPatches = 4
    kSplines = 16
    kProgressive16 = 32
    kSkipPredictLF = 128


# ---------------------------------------------------------------------------
# codecs

class Codec:
    def read(self, r: BitReader, ctx) -> Any:
        raise NotImplementedError

    def write(self, w: BitWriter, value, ctx) -> None:
        raise NotImplementedError


class BoolC(Codec):
    def read(self, r, ctx):
        return r.u(1) == 1

    def write(self, w, value, ctx):
        w.write(1, 1 if value else 0)


class UC(Codec):
    def __init__(self, n):
        self.n = n

    def read(self, r, ctx):
        return r.u(self.n)

    def write(self, w, value, ctx):
        w.write(self.n, value)


class U32C(Codec):
    def __init__(self, *dists):
        self.d = dists

    def read(self, r, ctx):
        return read_u32(r, self.d)

    def write(self, w, value, ctx):
        write_u32(w, self.d, value)


class S32C(U32C):
    def read(self, r, ctx):
        return read_s32(r, self.d)

    def write(self, w, value, ctx):
        write_s32(w, self.d, value)


class U64C(Codec):
    def read(self, r, ctx):
        return read_u64(r)

    def write(self, w, value, ctx):
        write_u64(w, value)


class F16C(Codec):
    def read(self, r, ctx):
        return read_f16(r)

    def write(self, w, value, ctx):
        write_f16(w, value)


class EnumC(Codec):
    def __init__(self, table):
        self.table = table

    def read(self, r, ctx):
        return read_enum(r, self.table)

    def write(self, w, value, ctx):
        write_enum(w, self.table(value))


class BundleC(Codec):
    def __init__(self, cls):
        self.cls = cls

    def read(self, r, ctx):
        return self.cls.decode(r, ctx)

    def write(self, w, value, ctx):
        value.encode(w, ctx)


class ArrayC(Codec):
    """Fixed-count array whose length is computed from the bundle so far."""

    def __init__(self, codec, count: Callable):
        self.codec = codec
        self.count = count

    def read_array(self, r, b, ctx):
        return [self.codec.read(r, ctx) for _ in range(self.count(b, ctx))]

    def write_array(self, w, b, values, ctx):
        n = self.count(b, ctx)
        if len(values) != n:
            raise EncoderError(f"array needs {n} entries, got {len(values)}")
        for v in values:
            self.codec.write(w, v, ctx)


@dataclass
class Field:
    name: str
    codec: Codec
    cond: Optional[Callable] = None
    default: Any = None


class Bundle:
    FIELDS: list[Field] = []

    def __init__(self, **kw):
        for f in self.FIELDS:
            setattr(self, f.name, self._default(f))
        for k, v in kw.items():
            if not any(f.name == k for f in self.FIELDS):
                raise TypeError(f"{type(self).__name__} has no field {k}")
            setattr(self, k, v)

    def _default(self, f: Field):
        d = f.default
        if callable(d):
            return d(self)
        if isinstance(d, list):
            return list(d)
        return d

    @classmethod
    def decode(cls, r: BitReader, ctx=None):
        b = cls.__new__(cls)
        start = r.bit_pos
        for f in cls.FIELDS:
            if f.cond is None or f.cond(b, ctx):
                if isinstance(f.codec, ArrayC):
                    v = f.codec.read_array(r, b, ctx)
                else:
                    v = f.codec.read(r, ctx)
            else:
                v = b._default(f)
            setattr(b, f.name, v)
        b.validate(ctx, start >> 3)
        return b

    def encode(self, w: BitWriter, ctx=None) -> None:
        for f in self.FIELDS:
            if f.cond is None or f.cond(self, ctx):
                v = getattr(self, f.name)
                if isinstance(f.codec, ArrayC):
                    f.codec.write_array(w, self, v, ctx)
                else:
                    f.codec.write(w, v, ctx)

    def validate(self, ctx, offset) -> None:
        pass

    def as_dict(self) -> dict:
        out = {}
        for f in self.FIELDS:
            v = getattr(self, f.name)
            if isinstance(v, Bundle):
                v = v.as_dict()
            elif isinstance(v, list):
                v = [x.as_dict() if isinstance(x, Bundle) else _plain(x) for x in v]
            else:
                v = _plain(v)
            out[f.name] = v
        return out

    def __eq__(self, other):
        return type(self) is type(other) and self.as_dict() == other.as_dict()

    def __repr__(self):
        return f"{type(self).__name__}({self.as_dict()})"


def _plain(v):
    if isinstance(v, IntEnum):
        return v.name
    return v


def _to_bytes(bundle: Bundle, ctx=None) -> bytes:
    w = BitWriter()
    bundle.encode(w, ctx)
    return w.getvalue()


# ---------------------------------------------------------------------------
# signature and sizes

def decode_signature(r: BitReader) -> None:
    ff = r.u(8)
    kind = r.u(8)
    if ff != 255 or kind != 10:
        raise IllFormed(f"bad signature {ff:#04x} {kind:#04x}", 0)


def encode_signature(w: BitWriter) -> None:
    w.write(8, 255)
    w.write(8, 10)


ASPECT_RATIOS = {1: (1, 1), 2: (12, 10), 3: (4, 3), 4: (3, 2), 5: (16, 9), 6: (5, 4), 7: (2, 1)}


def aspect_xsize(ratio: int, ysize: int) -> int:
    num, den = ASPECT_RATIOS[ratio]
    return ysize * num // den


_SIZE_U32 = U32C(Bits(9), Bits(13), Bits(18), Bits(30))


class _Dims:
    """xsize/ysize properties shared by SizeHeader and PreviewHeader."""

    _flag = "small"

    @property
    def ysize(self) -> int:
        if getattr(self, self._flag):
            return (self.ysize_div8_minus_1 + 1) * 8
        return self.ysize_minus_1 + 1

    @property
    def xsize(self) -> int:
        if self.ratio:
            return aspect_xsize(self.ratio, self.ysize)
        if getattr(self, self._flag):
            return (self.xsize_div8_minus_1 + 1) * 8
        return self.xsize_minus_1 + 1

    @classmethod
    def _fit(cls, xsize, ysize, div8_ok):
        if xsize < 1 or ysize < 1:
            raise EncoderError("image dimensions must be positive")
        flag = ysize % 8 == 0 and div8_ok(ysize // 8 - 1)
        kw = {cls._flag: flag}
        if flag:
            kw["ysize_div8_minus_1"] = ysize // 8 - 1
        else:
            kw["ysize_minus_1"] = ysize - 1
        ratio = next((k for k in ASPECT_RATIOS if aspect_xsize(k, ysize) == xsize), 0)
        kw["ratio"] = ratio
        if not ratio:
            if flag and xsize % 8 == 0 and div8_ok(xsize // 8 - 1):
                kw["xsize_div8_minus_1"] = xsize // 8 - 1
            elif flag:
                # mixed divisibility: fall back to the plain encoding
                kw = {cls._flag: False, "ysize_minus_1": ysize - 1, "ratio": 0,
                      "xsize_minus_1": xsize - 1}
            else:
                kw["xsize_minus_1"] = xsize - 1
        return cls(**kw)

    def to_dict(self):
        d = self.as_dict()
        d["xsize"], d["ysize"] = self.xsize, self.ysize
        return d


class SizeHeader(_Dims, Bundle):
    FIELDS = [
        Field("small", BoolC()),
        Field("ysize_div8_minus_1", UC(5), lambda b, c: b.small, 0),
        Field("ysize_minus_1", _SIZE_U32, lambda b, c: not b.small, 0),
        Field("ratio", UC(3)),
        Field("xsize_div8_minus_1", UC(5), lambda b, c: b.small and b.ratio == 0, 0),
        Field("xsize_minus_1", _SIZE_U32, lambda b, c: not b.small and b.ratio == 0, 0),
    ]

    @classmethod
    def for_dims(cls, xsize, ysize):
        return cls._fit(xsize, ysize, lambda v: v < 32)


_PREVIEW_DIV8 = U32C(Val(15), Val(31), Bits(5), BitsOffset(9, 32))
_PREVIEW_PLAIN = U32C(Bits(6), BitsOffset(8, 64), BitsOffset(10, 320), BitsOffset(12, 1344))


class PreviewHeader(_Dims, Bundle):
    _flag = "div8"
    FIELDS = [
        Field("div8", BoolC()),
        Field("ysize_div8_minus_1", _PREVIEW_DIV8, lambda b, c: b.div8, 0),
        Field("ysize_minus_1", _PREVIEW_PLAIN, lambda b, c: not b.div8, 0),
        Field("ratio", UC(3)),
        Field("xsize_div8_minus_1", _PREVIEW_DIV8, lambda b, c: b.div8 and b.ratio == 0, 0),
        Field("xsize_minus_1", _PREVIEW_PLAIN, lambda b, c: not b.div8 and b.ratio == 0, 0),
    ]

    def validate(self, ctx, offset):
        if self.xsize > 4096 or self.ysize > 4096:
            raise IllFormed("preview larger than 4096", offset)

    @classmethod
    def for_dims(cls, xsize, ysize):
        return cls._fit(xsize, ysize, lambda v: v < 32 + 512)


# ---------------------------------------------------------------------------
# colour encoding

_XY = S32C(Bits(19), BitsOffset(19, 524288), BitsOffset(20, 1048576), BitsOffset(21, 2097152))


class Customxy(Bundle):
    FIELDS = [Field("x", _XY, None, 0), Field("y", _XY, None, 0)]


def _use_desc(b):
    return not b.all_default and not b.opaque_icc


def _not_xy(b):
    return b.colour_space not in (ColourSpace.kXYZ, ColourSpace.kXYB)


class ColourEncoding(Bundle):
    FIELDS = [
        Field("all_default", BoolC(), None, True),
        Field("received_icc", BoolC(), lambda b, c: not b.all_default, False),
        Field("opaque_icc", BoolC(), lambda b, c: b.received_icc, False),
        Field("colour_space", EnumC(ColourSpace), lambda b, c: _use_desc(b), ColourSpace.kRGB),
        Field("white_point", EnumC(WhitePoint), lambda b, c: _use_desc(b) and _not_xy(b), WhitePoint.kD65),
        Field("white", BundleC(Customxy),
              lambda b, c: _use_desc(b) and b.white_point == WhitePoint.kCustom, lambda b: Customxy()),
        Field("primaries", EnumC(Primaries),
              lambda b, c: _use_desc(b) and _not_xy(b) and b.colour_space != ColourSpace.kGrey,
              Primaries.kSRGB),
        Field("red", BundleC(Customxy),
              lambda b, c: _use_desc(b) and b.primaries == Primaries.kCustom, lambda b: Customxy()),
        Field("green", BundleC(Customxy),
              lambda b, c: _use_desc(b) and b.primaries == Primaries.kCustom, lambda b: Customxy()),
        Field("blue", BundleC(Customxy),
              lambda b, c: _use_desc(b) and b.primaries == Primaries.kCustom, lambda b: Customxy()),
        Field("have_gamma", BoolC(), lambda b, c: _use_desc(b) and _not_xy(b), False),
        Field("gamma", UC(24), lambda b, c: _use_desc(b) and b.have_gamma, 0),
        Field("transfer_function", EnumC(TransferFunction),
              lambda b, c: _use_desc(b) and not b.have_gamma and _not_xy(b), TransferFunction.kSRGB),
        Field("rendering_intent", EnumC(RenderingIntent),
              lambda b, c: _use_desc(b) and b.colour_space != ColourSpace.kGrey and _not_xy(b),
              RenderingIntent.kRelative),
    ]

    def validate(self, ctx, offset):
        if self.have_gamma and not 0 < self.gamma < 10 ** 7:
            raise IllFormed("gamma exponent outside (0, 1)", offset)


# ---------------------------------------------------------------------------
# extensions and metadata

class Extensions(Bundle):
    """Extension container; no extension is understood, all payload bits are skipped."""

    FIELDS = [
        Field("extensions", U64C(), None, 0),
        Field("extension_bits", U64C(), lambda b, c: b.extensions != 0, 0),
    ]

    @classmethod
    def decode(cls, r, ctx=None):
        b = super().decode(r, ctx)
        if b.extensions:
            r.skip(b.extension_bits)
        return b

    def encode(self, w, ctx=None):
        super().encode(w, ctx)
        if self.extensions:
            left = self.extension_bits
            while left:
                n = min(32, left)
                w.write(n, 0)
                left -= n


class ExtraChannelInfo(Bundle):
    FIELDS = [
        Field("meaning", U32C(Val(0), Val(1), Val(2), Bits(6)), None, 0),
        Field("red", F16C(), lambda b, c: b.meaning == 1, 0.0),
        Field("green", F16C(), lambda b, c: b.meaning == 1, 0.0),
        Field("blue", F16C(), lambda b, c: b.meaning == 1, 0.0),
        Field("solidity", F16C(), lambda b, c: b.meaning == 1, 0.0),
    ]


_DEPTH_BITS = U32C(Val(0), Val(8), Val(16), Bits(4))


class ImageMetadata2(Bundle):
    FIELDS = [
        Field("all_default", BoolC(), None, True),
        Field("have_preview", BoolC(), lambda b, c: not b.all_default, False),
        Field("have_animation", BoolC(), lambda b, c: not b.all_default, False),
        Field("orientation_minus_1", UC(3), lambda b, c: not b.all_default, 0),
        Field("depth_bits", _DEPTH_BITS, lambda b, c: not b.all_default, 0),
        Field("depth_shift", U32C(Val(0), Val(3), Val(4), BitsOffset(3, 1)),
              lambda b, c: not b.all_default, 0),
        Field("num_extra_channels", U32C(Val(0), Bits(4), BitsOffset(8, 16), BitsOffset(12, 1)),
              lambda b, c: not b.all_default, 0),
        Field("extra_channel_bits", _DEPTH_BITS, lambda b, c: b.num_extra_channels > 0, 0),
        Field("extra_channel_info", ArrayC(BundleC(ExtraChannelInfo), lambda b, c: b.num_extra_channels),
              None, []),
        Field("extensions", BundleC(Extensions), lambda b, c: not b.all_default, lambda b: Extensions()),
    ]

    def validate(self, ctx, offset):
        if self.depth_bits > 16:
            raise IllFormed("depth_bits exceeds 16", offset)
        if (1 << self.depth_shift) > K_GROUP_DIM:
            raise IllFormed("depth_shift exceeds the group size", offset)


class ImageMetadata(Bundle):
    FIELDS = [
        Field("all_default", BoolC(), None, True),
        Field("have_icc", BoolC(), lambda b, c: not b.all_default, False),
        Field("bits_per_sample", U32C(Val(8), Val(16), Val(32), Bits(5)),
              lambda b, c: not b.all_default, 8),
        Field("colour_encoding", BundleC(ColourEncoding), lambda b, c: not b.all_default,
              lambda b: ColourEncoding()),
        Field("alpha_bits", U32C(Val(0), Val(8), Val(16), Bits(4)), lambda b, c: not b.all_default, 0),
        Field("target_nits_div50", U32C(Val(5), Val(20), Val(80), BitsOffset(10, 1)),
              lambda b, c: not b.all_default, 5),
        Field("m2", BundleC(ImageMetadata2), lambda b, c: not b.all_default, lambda b: ImageMetadata2()),
    ]

    def validate(self, ctx, offset):
        if not 1 <= self.bits_per_sample <= 32:
            raise IllFormed("bits_per_sample outside [1, 32]", offset)
        if self.alpha_bits > 16:
            raise IllFormed("alpha_bits exceeds 16", offset)
        if self.colour_encoding.opaque_icc and not self.have_icc:
            raise IllFormed("opaque_icc without an ICC profile", offset)


class AnimationHeader(Bundle):
    FIELDS = [
        Field("composite_still", BoolC(), None, False),
        Field("tps_numerator_minus_1", U32C(Val(99), Val(999), Bits(6), Bits(18)),
              lambda b, c: not b.composite_still, 0),
        Field("tps_denominator_minus_1", U32C(Val(0), Val(1000), Bits(8), Bits(10)),
              lambda b, c: not b.composite_still, 0),
        Field("num_loops", U32C(Val(0), Bits(3), Bits(16), Bits(32)), lambda b, c: not b.composite_still, 0),
        Field("have_timecodes", BoolC(), lambda b, c: not b.composite_still, False),
    ]


# ---------------------------------------------------------------------------
# frame header

@dataclass
class FrameContext:
    """Cross-bundle inputs needed while decoding a frame header."""

    size: SizeHeader
    metadata: ImageMetadata
    animation: Optional[AnimationHeader] = None


_CROP = U32C(Bits(8), BitsOffset(11, 256), BitsOffset(14, 2304), BitsOffset(30, 18688))


def _have_timecodes(ctx) -> bool:
    return bool(ctx is not None and ctx.animation is not None and ctx.animation.have_timecodes)


class AnimationFrame(Bundle):
    FIELDS = [
        Field("duration", U32C(Val(0), Val(1), Bits(8), Bits(32)), None, 0),
        Field("dispose_mode", UC(2), lambda b, c: b.duration > 0, 1),
        Field("blend_mode", UC(2), None, 0),
        Field("timecode", UC(32), lambda b, c: _have_timecodes(c), 0),
        Field("have_crop", BoolC(), None, False),
        Field("x0", _CROP, lambda b, c: b.have_crop, 0),
        Field("y0", _CROP, lambda b, c: b.have_crop, 0),
        Field("xsize", _CROP, lambda b, c: b.have_crop, 0),
        Field("ysize", _CROP, lambda b, c: b.have_crop, 0),
        Field("is_last", BoolC(), None, True),
    ]

    def validate(self, ctx, offset):
        if self.blend_mode == 3:
            raise IllFormed("blend_mode 3 is reserved", offset)
        if self.dispose_mode == 3:
            raise IllFormed("dispose_mode 3 is reserved", offset)
        if self.have_crop and ctx is not None:
            sx, sy = ctx.size.xsize, ctx.size.ysize
            if self.xsize == 0 or self.ysize == 0:
                raise IllFormed("empty crop rectangle", offset)
            if self.x0 + self.xsize >= sx or self.y0 + self.ysize >= sy:
                raise IllFormed("crop rectangle outside the image", offset)
            if self.xsize >= sx or self.ysize >= sy:
                raise IllFormed("cropped frame not smaller than the image", offset)


class LosslessMode(Bundle):
    FIELDS = [Field("greyscale", BoolC(), None, False), Field("bits16", BoolC(), None, False)]


class Passes(Bundle):
    FIELDS = [
        Field("num_passes", U32C(Val(1), Val(2), Val(3), BitsOffset(3, 4)), None, 1),
        Field("num_downsample", U32C(Val(0), Val(1), Val(2), BitsOffset(1, 3)),
              lambda b, c: b.num_passes != 1, 0),
        Field("shift", ArrayC(UC(2), lambda b, c: b.num_passes - 1), None, []),
        Field("downsample", ArrayC(U32C(Val(1), Val(2), Val(4), Val(8)), lambda b, c: b.num_downsample),
              lambda b, c: b.num_passes != 1, []),
        Field("last_pass", ArrayC(U32C(Val(0), Val(1), Val(2), Bits(3)), lambda b, c: b.num_downsample),
              lambda b, c: b.num_passes != 1, []),
    ]

    def validate(self, ctx, offset):
        if self.num_downsample >= self.num_passes:
            raise IllFormed("num_downsample >= num_passes", offset)
        if any(p >= self.num_passes for p in self.last_pass):
            raise IllFormed("last_pass >= num_passes", offset)


def _have_animation(ctx) -> bool:
    return bool(ctx is not None and ctx.metadata.m2.have_animation)


class FrameHeader(Bundle):
    FIELDS = [
        Field("all_default", BoolC(), None, True),
        Field("animation_frame", BundleC(AnimationFrame),
              lambda b, c: not b.all_default and _have_animation(c), None),
        Field("encoding", EnumC(FrameEncoding), lambda b, c: not b.all_default, FrameEncoding.kPasses),
        Field("lossless", BundleC(LosslessMode), lambda b, c: b.encoding == FrameEncoding.kLossless, None),
        Field("passes", BundleC(Passes), lambda b, c: not b.all_default and b.encoding == FrameEncoding.kPasses,
              lambda b: Passes()),
        Field("flags", U64C(), lambda b, c: not b.all_default and b.encoding == FrameEncoding.kPasses, 0),
        Field("extensions", BundleC(Extensions), lambda b, c: not b.all_default, lambda b: Extensions()),
    ]

    @property
    def is_last(self) -> bool:
        # without an animation_frame there is exactly one frame
        return self.animation_frame is None or self.animation_frame.is_last

    def frame_dims(self, size: SizeHeader) -> tuple[int, int]:
        af = self.animation_frame
        if af is not None and af.have_crop:
            return af.xsize, af.ysize
        return size.xsize, size.ysize


_F16_DEFAULT = [0.115169525, 0.061248592] * 3


class LoopFilter(Bundle):
    FIELDS = [
        Field("all_default", BoolC(), None, True),
        Field("gab", BoolC(), lambda b, c: not b.all_default, True),
        Field("gab_custom", BoolC(), lambda b, c: not b.all_default and b.gab, False),
        *[Field(n, F16C(), lambda b, c: b.gab_custom, d) for n, d in zip(
            ["gab_x_weight1", "gab_x_weight2", "gab_y_weight1", "gab_y_weight2",
             "gab_b_weight1", "gab_b_weight2"], _F16_DEFAULT)],
        Field("epf", BoolC(), lambda b, c: not b.all_default, True),
        Field("epf_weight_custom", BoolC(), lambda b, c: not b.all_default and b.epf, False),
        Field("epf_weight_min", F16C(), lambda b, c: b.epf_weight_custom, 0.3),
        Field("epf_scale_custom", BoolC(), lambda b, c: not b.all_default and b.epf, False),
        Field("epf_scale_x", F16C(), lambda b, c: b.epf_scale_custom, 899.676941),
        Field("epf_scale_y", F16C(), lambda b, c: b.epf_scale_custom, 111.965157),
        Field("epf_scale_b", F16C(), lambda b, c: b.epf_scale_custom, 45.275791),
        Field("epf_sharp_custom", BoolC(), lambda b, c: not b.all_default and b.epf, False),
        Field("epf_sharp_lut", ArrayC(F16C(), lambda b, c: 8), lambda b, c: b.epf_sharp_custom,
              [i / 7 for i in range(8)]),
        Field("epf_sigma_custom", BoolC(), lambda b, c: not b.all_default and b.epf, False),
        Field("epf_range_max", F16C(), lambda b, c: b.epf_sigma_custom, 70.0),
        Field("epf_range_mul", F16C(), lambda b, c: b.epf_sigma_custom, 12.6),
        Field("epf_quant_mul", F16C(), lambda b, c: b.epf_sigma_custom, 20.0),
        Field("epf_sigma_max", U32C(Val(0), Val(170), Val(672), Bits(10)), lambda b, c: b.epf_sigma_custom, 170),
        Field("qco", BoolC(), lambda b, c: not b.all_default, False),
        Field("qco_custom", BoolC(), lambda b, c: b.qco, False),
        Field("qco_interval_mul", F16C(), lambda b, c: b.qco_custom, 0.5),
        Field("extensions", BundleC(Extensions), lambda b, c: not b.all_default, lambda b: Extensions()),
    ]


# ---------------------------------------------------------------------------
# groups and TOC

@dataclass(frozen=True)
class GroupRect:
    index: int
    x0: int
    y0: int
    xsize: int
    ysize: int


def compute_group_grid(xsize: int, ysize: int, group_dim: int = K_GROUP_DIM) -> list[GroupRect]:
    gx = -(-xsize // group_dim)
    gy = -(-ysize // group_dim)
    out = []
    for j in range(gy):
        for i in range(gx):
            x0, y0 = i * group_dim, j * group_dim
            out.append(GroupRect(len(out), x0, y0, min(group_dim, xsize - x0), min(group_dim, ysize - y0)))
    return out


def num_toc_entries(fh: FrameHeader, xsize: int, ysize: int) -> int:
    enc = fh.encoding
    if enc == FrameEncoding.kModular:
        return 6
    groups = math.ceil(xsize / K_GROUP_DIM) * math.ceil(ysize / K_GROUP_DIM)
    if groups == 1:
        return 1
    if enc == FrameEncoding.kModularGroup:
        return groups
    if enc == FrameEncoding.kLossless:
        return 1 + groups
    passes = fh.passes.num_passes
    n = 1  # DcGlobal
    if fh.flags & Flags.kProgressive16:
        n += math.ceil(xsize / (K_GROUP_DIM * 16)) * math.ceil(ysize / (K_GROUP_DIM * 16))
    n += math.ceil(xsize / (K_GROUP_DIM * 8)) * math.ceil(ysize / (K_GROUP_DIM * 8))
    n += 1 + passes + groups * passes
    return n


TOC_ENTRY = (Bits(10), BitsOffset(14, 1024), BitsOffset(22, 17408), BitsOffset(30, 4211712))


@dataclass
class Toc:
    permuted: bool
    permutation: Optional[list]
    entries: list
    group_offsets: list
    start: int  # byte index P of the first section

    @property
    def end(self) -> int:
        return self.start + sum(self.entries)

    def section(self, i: int) -> tuple[int, int]:
        """(start byte, length) of section ``i`` in stored order of the offsets."""
        if self.permutation is None:
            length = self.entries[i]
        else:
            length = self.entries[self.permutation[i]]
        return self.start + self.group_offsets[i], length


def decode_toc(r: BitReader, num_entries: int) -> Toc:
    # imported lazily: entropy pulls in nothing from here, but keep the
    # header module usable on its own for inspection
    from .entropy import AnsDecoder, decode_clustered_distributions, decode_permutation

    permuted = r.u(1) == 1
    permutation = None
    if permuted:
        dists = decode_clustered_distributions(r, 8)
        dec = AnsDecoder(r)
        permutation = decode_permutation(r, dec, dists, num_entries, 0)
        dec.check_final()
    r.pu0()
    entries = []
    for _ in range(num_entries):
        pos = r.bit_pos
        e = read_u32(r, TOC_ENTRY)
        if e == 0:
            raise IllFormed("zero TOC entry", pos >> 3)
        entries.append(e)
    r.pu0()
    offsets = [0]
    for e in entries[:-1]:
        offsets.append(offsets[-1] + e)
    if permutation is not None:
        offsets = [offsets[p] for p in permutation]
    return Toc(permuted, permutation, entries, offsets, r.byte_pos)


def encode_toc(w: BitWriter, entries, permutation=None) -> None:
    if permutation is None:
        w.write(1, 0)
    else:
        from .refcodec.entropy import encode_permutation
        w.write(1, 1)
        encode_permutation(w, permutation, 0)
    w.pu0()
    for e in entries:
        if e <= 0:
            raise EncoderError("TOC entries must be positive")
        write_u32(w, TOC_ENTRY, e)
    w.pu0()
