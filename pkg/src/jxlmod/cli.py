"""Command-line front end: inspect, decode, icc and selftest."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .codestream import Codestream, decode_codestream, detect_signature
from .errors import IllFormed, Unsupported

EXIT_OK, EXIT_ILL_FORMED, EXIT_UNSUPPORTED = 0, 2, 3


def _fmt_bundle(b) -> str:
    d = b.to_dict() if hasattr(b, "to_dict") else b.as_dict()
    return ", ".join(f"{k}={v}" for k, v in d.items())


def _report(cs: Codestream, out) -> None:
    print(f"size: xsize={cs.size.xsize}, ysize={cs.size.ysize}", file=out)
    m = cs.metadata
    print(f"metadata: have_icc={m.have_icc}, bits_per_sample={m.bits_per_sample}, "
          f"alpha_bits={m.alpha_bits}, target_nits_div50={m.target_nits_div50}", file=out)
    print(f"metadata.m2: {_fmt_bundle(m.m2)}", file=out)
    print(f"colour_encoding: {_fmt_bundle(m.colour_encoding)}", file=out)
    if cs.preview is not None:
        print(f"preview: xsize={cs.preview.xsize}, ysize={cs.preview.ysize}", file=out)
    if cs.animation is not None:
        print(f"animation: {_fmt_bundle(cs.animation)}", file=out)
    if cs.icc is not None:
        print(f"icc: {len(cs.icc)} bytes", file=out)
    frames = ([("preview_frame", cs.preview_frame)] if cs.preview_frame else []) + \
        [(f"frame {i}", f) for i, f in enumerate(cs.frames)]
    for label, f in frames:
        print(f"{label}: encoding={f.encoding.name}, xsize={f.xsize}, ysize={f.ysize}, "
              f"bytes {f.start}..{f.end}", file=out)
        print(f"  header: {_fmt_bundle(f.header)}", file=out)
        if f.loop_filter is not None:
            print(f"  loop_filter: {_fmt_bundle(f.loop_filter)}", file=out)
        toc = f.toc
        print(f"  toc: entries={len(toc.entries)}, permuted={toc.permuted}, P={toc.start}", file=out)
        for i, e in enumerate(toc.entries):
            start, length = toc.section(i)
            print(f"    section {i}: offset={start} length={length} (entry {e})", file=out)


def _fail(e: Exception) -> int:
    if isinstance(e, IllFormed):
        print(f"ill-formed: {e}", file=sys.stderr)
        return EXIT_ILL_FORMED
    print(f"unsupported: {e}", file=sys.stderr)
    return EXIT_UNSUPPORTED


def cmd_inspect(args) -> int:
    data = Path(args.file).read_bytes()
    kind = detect_signature(data)
    print(f"signature: {kind}")
    try:
        cs = decode_codestream(data, decode_pixels=False)
    except (IllFormed, Unsupported) as e:
        partial = getattr(e, "partial", None)
        if partial is not None:
            _report(partial, sys.stdout)
        return _fail(e)
    _report(cs, sys.stdout)
    return EXIT_OK


def _clamp_rows(plane, top):
    return [[0 if v < 0 else top if v > top else v for v in row] for row in plane.rows]


def write_pnm(path, planes) -> None:
    colour = [p for p in planes if p.name in ("grey", "red", "green", "blue", "alpha")]
    bits = max(p.bits for p in colour)
    maxval = (1 << bits) - 1
    w, h = colour[0].width, colour[0].height
    names = [p.name for p in colour]
    if names == ["grey"]:
        head = f"P5\n{w} {h}\n{maxval}\n"
    elif names == ["red", "green", "blue"]:
        head = f"P6\n{w} {h}\n{maxval}\n"
    else:
        tupl = {2: "GRAYSCALE_ALPHA", 4: "RGB_ALPHA"}[len(colour)]
        head = (f"P7\nWIDTH {w}\nHEIGHT {h}\nDEPTH {len(colour)}\nMAXVAL {maxval}\n"
                f"TUPLTYPE {tupl}\nENDHDR\n")
    rows = [_clamp_rows(p, maxval) for p in colour]
    size = 1 if maxval < 256 else 2
    out = bytearray(head.encode("ascii"))
    for y in range(h):
        for x in range(w):
            for r in rows:
                out += r[y][x].to_bytes(size, "big")
    Path(path).write_bytes(bytes(out))


def write_raw(path, planes) -> None:
    out = bytearray()
    for p in planes:
        size = 1 if p.bits <= 8 else 2 if p.bits <= 16 else 4
        top = (1 << p.bits) - 1
        for row in _clamp_rows(p, top):
            for v in row:
                out += v.to_bytes(size, "little")
    Path(path).write_bytes(bytes(out))


def cmd_decode(args) -> int:
    data = Path(args.file).read_bytes()
    try:
        cs = decode_codestream(data, max_frames=args.frame + 1)
    except (IllFormed, Unsupported) as e:
        return _fail(e)
    if args.frame >= len(cs.frames):
        print(f"frame {args.frame} not present ({len(cs.frames)} frames)", file=sys.stderr)
        return EXIT_ILL_FORMED
    planes = cs.frames[args.frame].planes
    if args.format == "raw":
        write_raw(args.output, planes)
    else:
        write_pnm(args.output, planes)
    return EXIT_OK


def cmd_icc(args) -> int:
    data = Path(args.file).read_bytes()
    try:
        cs = decode_codestream(data, decode_pixels=False)
    except (IllFormed, Unsupported) as e:
        partial = getattr(e, "partial", None)
        if partial is None or partial.icc is None:
            return _fail(e)
        cs = partial
    if cs.icc is None:
        print("unsupported: no embedded ICC profile (synthesis from the colour encoding "
              "is not implemented)", file=sys.stderr)
        return EXIT_UNSUPPORTED
    Path(args.output).write_bytes(cs.icc)
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .refcodec.selftest import run_selftest
    results = run_selftest(args.seed, args.count)
    for r in results:
        print(r.line())
    if args.fixtures:
        d = Path(args.fixtures)
        d.mkdir(parents=True, exist_ok=True)
        for r in results:
            (d / f"{r.name}.bin").write_bytes(b"".join(
                len(s).to_bytes(4, "little") + s for s in r.fixtures))
    failed = sum(r.failed for r in results)
    print(f"total: passed={sum(r.passed for r in results)} failed={failed} seed={args.seed}")
    return 1 if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jxlmod", description="Modular/lossless codestream tool")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("inspect", help="print headers and frame tables")
    s.add_argument("file")
    s.set_defaults(func=cmd_inspect)
    s = sub.add_parser("decode", help="decode a frame to PNM or raw planes")
    s.add_argument("file")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--format", choices=["pnm", "raw"], default="pnm")
    s.add_argument("--frame", type=int, default=0)
    s.set_defaults(func=cmd_decode)
    s = sub.add_parser("icc", help="extract the embedded ICC profile")
    s.add_argument("file")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_icc)
    s = sub.add_parser("selftest", help="run embedded round-trip suites")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--count", type=int, default=60, help="cases per suite")
    s.add_argument("--fixtures", help="directory to write the generated streams to")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ILL_FORMED if args.command != "selftest" else 1


if __name__ == "__main__":
    sys.exit(main())
