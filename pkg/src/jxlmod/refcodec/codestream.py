"""Codestream writer: headers, optional ICC profile and modular/lossless frames."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..bitio import BitWriter
from ..codestream import _modular_shapes
from ..errors import EncoderError
from ..headers import (
    AnimationFrame, AnimationHeader, ColourEncoding, ColourSpace, Extensions, FrameContext,
    FrameEncoding, FrameHeader, ImageMetadata, ImageMetadata2, LosslessMode, PreviewHeader,
    SizeHeader, compute_group_grid, encode_signature, encode_toc, num_toc_entries,
)
from ..modular import Channel, ModularImage
from .icc import encode_icc
from .lossless import build_palette, encode_group, encode_palettes
from .modular import ChannelPlan, encode_modular, forward_transforms

ENCODINGS = {
    "modular": FrameEncoding.kModular,
    "modular_group": FrameEncoding.kModularGroup,
    "lossless": FrameEncoding.kLossless,
}


@dataclass
class FrameSpec:
    """One frame to write.

    ``planes`` holds full-resolution rows for each channel in stream order
    (colour, alpha, depth at its reduced size, extras).  Modular frames apply
    ``transforms`` (per group for ``modular_group``); lossless frames use
    ``colour_transform``, ``modes`` and optionally per-channel palettes.
    """

    planes: list
    encoding: str = "modular"
    transforms: list = field(default_factory=list)
    plans: object = None
    max_extra_properties: int = 0
    colour_transform: int = 0
    modes: Optional[list] = None
    palettes: bool = False
    method16: Optional[int] = None
    crop: Optional[tuple] = None
    duration: int = 0
    permutation: Optional[list] = None


@dataclass
class ImageSpec:
    xsize: int
    ysize: int
    grey: bool = False
    bits: int = 8
    alpha_bits: int = 0
    depth_bits: int = 0
    depth_shift: int = 0
    num_extra: int = 0
    extra_bits: int = 0
    icc: Optional[bytes] = None
    icc_structured: bool = False
    animation: bool = False
    preview: Optional[FrameSpec] = None
    preview_dims: Optional[tuple] = None


def build_metadata(spec: ImageSpec) -> ImageMetadata:
    plain = (not spec.grey and spec.bits == 8 and not spec.alpha_bits and not spec.depth_bits
             and not spec.num_extra and spec.icc is None and not spec.animation and spec.preview is None)
    if plain:
        return ImageMetadata()
    ce = ColourEncoding()
    if spec.grey:
        ce = ColourEncoding(all_default=False, colour_space=ColourSpace.kGrey)
    m2 = ImageMetadata2()
    if spec.depth_bits or spec.num_extra or spec.animation or spec.preview is not None:
        m2 = ImageMetadata2(all_default=False, have_preview=spec.preview is not None,
                            have_animation=spec.animation, depth_bits=spec.depth_bits,
                            depth_shift=spec.depth_shift, num_extra_channels=spec.num_extra,
                            extra_channel_bits=spec.extra_bits if spec.num_extra else 0,
                            extensions=Extensions())
        if spec.num_extra:
            from ..headers import ExtraChannelInfo
            m2.extra_channel_info = [ExtraChannelInfo() for _ in range(spec.num_extra)]
    return ImageMetadata(all_default=False, have_icc=spec.icc is not None, bits_per_sample=spec.bits,
                         colour_encoding=ce, alpha_bits=spec.alpha_bits, m2=m2)


def _modular_payload(fs: FrameSpec, meta, xsize, ysize, region=None) -> bytes:
    """Encode the channels of ``fs`` restricted to ``region`` (x0, y0, w, h)."""
    shapes = _modular_shapes(meta, xsize, ysize)
    chans = []
    for rows, (w, h, hs, vs) in zip(fs.planes, shapes):
        if region is None:
            sub = [list(r) for r in rows]
        else:
            x0, y0 = region[0] >> hs, region[1] >> vs
            sub = [list(r[x0:x0 + w]) for r in rows[y0:y0 + h]]
        if len(sub) != h or any(len(r) != w for r in sub):
            raise EncoderError("plane dimensions do not match the channel layout")
        chans.append(Channel(w, h, hs, vs, data=sub))
    if len(chans) != len(shapes):
        raise EncoderError(f"expected {len(shapes)} planes, got {len(fs.planes)}")
    img = ModularImage(chans, xsize=xsize, ysize=ysize, bit_depth=meta.bits_per_sample)
    signalled = forward_transforms(img, fs.transforms)
    w = BitWriter()
    encode_modular(w, shapes, xsize, ysize, signalled, img.channels,
                   fs.plans or ChannelPlan(), fs.max_extra_properties, meta.bits_per_sample)
    w.pu0()
    return w.getvalue()


def _lossless_sections(fs: FrameSpec, meta, xsize, ysize):
    grey = meta.colour_encoding.colour_space == ColourSpace.kGrey
    bits16 = meta.bits_per_sample > 8
    flat = [[v for r in rows for v in r] for rows in fs.planes]
    palettes = [None] * len(flat)
    if fs.palettes and xsize * ysize >= 257:
        palettes = [build_palette(p, bits16) for p in flat]
    head = BitWriter()
    encode_palettes(head, palettes, grey, bits16, xsize * ysize, fs.method16)
    groups = []
    for g in compute_group_grid(xsize, ysize):
        sub = [[rows[g.y0 + y][g.x0 + x] for y in range(g.ysize) for x in range(g.xsize)]
               for rows in fs.planes]
        # a lone group shares its section with the palettes, which end aligned
        w = head if len(compute_group_grid(xsize, ysize)) == 1 else BitWriter()
        encode_group(w, sub, grey, bits16, g.xsize, g.ysize, palettes, fs.colour_transform, fs.modes)
        w.pu0()
        groups.append(w.getvalue())
    if len(groups) == 1:
        return [groups[0]], LosslessMode(greyscale=grey, bits16=bits16)
    head.pu0()
    return [head.getvalue()] + groups, LosslessMode(greyscale=grey, bits16=bits16)


def write_frame(w: BitWriter, fs: FrameSpec, size, meta, animation, is_last: bool) -> None:
    w.pu0()
    enc = ENCODINGS[fs.encoding]
    af = None
    if animation is not None:
        af = AnimationFrame(duration=fs.duration, is_last=is_last)
        if fs.crop is not None:
            x0, y0, cw, ch = fs.crop
            af.have_crop, af.x0, af.y0, af.xsize, af.ysize = True, x0, y0, cw, ch
    elif fs.crop is not None:
        raise EncoderError("cropped frames need an animation header")
    elif not is_last:
        raise EncoderError("multiple frames need an animation header")
    fh = FrameHeader(all_default=False, animation_frame=af, encoding=enc, extensions=Extensions())
    xsize, ysize = fh.frame_dims(size)
    if enc == FrameEncoding.kModular:
        payload = _modular_payload(fs, meta, xsize, ysize)
        # six progressive offsets; everything lives in the last one
        payload += bytes(max(0, 6 - len(payload)))
        sections = [payload[i:i + 1] for i in range(5)] + [payload[5:]]
    elif enc == FrameEncoding.kModularGroup:
        sections = [_modular_payload(fs, meta, g.xsize, g.ysize, (g.x0, g.y0, g.xsize, g.ysize))
                    for g in compute_group_grid(xsize, ysize)]
    else:
        sections, fh.lossless = _lossless_sections(fs, meta, xsize, ysize)
    ctx = FrameContext(size, meta, animation)
    fh.encode(w, ctx)
    n = num_toc_entries(fh, xsize, ysize)
    if n != len(sections):
        raise EncoderError(f"section count {len(sections)} does not match the TOC ({n})")
    if fs.permutation is not None:
        slots = _permuted_layout(sections, fs.permutation)
        encode_toc(w, [len(s) for s in slots], fs.permutation)
    else:
        slots = sections
        encode_toc(w, [len(s) for s in slots])
    for s in slots:
        w.write_bytes(s)


def _permuted_layout(sections, perm):
    """Byte layout such that offsets[perm] addresses each logical section.

    The decoder reads logical section i at group_offsets[i], the offset that
    belonged to entry perm[i]; so slot perm[i] must hold section i, and the
    entry lengths are those of the slots.
    """
    slots = [None] * len(sections)
    for i, p in enumerate(perm):
        slots[p] = sections[i]
    return slots


def encode_image(spec: ImageSpec, frames) -> bytes:
    """Write a full codestream with ``frames`` (list of :class:`FrameSpec`)."""
    if not frames:
        raise EncoderError("at least one frame is required")
    w = BitWriter()
    encode_signature(w)
    size = SizeHeader.for_dims(spec.xsize, spec.ysize)
    size.encode(w)
    meta = build_metadata(spec)
    meta.encode(w, FrameContext(size, None))
    preview = None
    if spec.preview is not None:
        pw, ph = spec.preview_dims
        preview = PreviewHeader.for_dims(pw, ph)
        preview.encode(w)
    animation = None
    if spec.animation:
        animation = AnimationHeader(composite_still=False)
        animation.encode(w)
    if spec.icc is not None:
        encode_icc(w, spec.icc, spec.icc_structured)
    if preview is not None:
        write_frame(w, spec.preview, preview, meta, animation, True)
    for i, fs in enumerate(frames):
        write_frame(w, fs, size, meta, animation, i == len(frames) - 1)
    return w.getvalue()
