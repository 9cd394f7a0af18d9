"""Thin ctypes binding to the system Brotli libraries.

The streaming decoder is used so that a Brotli stream embedded in a larger
buffer can be decoded and the number of bytes it occupied reported.
"""
from __future__ import annotations

import ctypes
import ctypes.util
from functools import lru_cache

from .errors import IllFormed, Unsupported

_RESULT_ERROR = 0
_RESULT_SUCCESS = 1
_RESULT_NEEDS_MORE_INPUT = 2
_RESULT_NEEDS_MORE_OUTPUT = 3


def _load(stem: str):
    for name in (ctypes.util.find_library(stem), f"lib{stem}.so.1", f"lib{stem}.so",
                 f"lib{stem}.dylib", f"{stem}.dll"):
        if not name:
            continue
        try:
            return ctypes.CDLL(name)
        except OSError:
            continue
    raise Unsupported(f"Brotli library {stem} not found")


@lru_cache(maxsize=None)
def _dec():
    lib = _load("brotlidec")
    lib.BrotliDecoderCreateInstance.restype = ctypes.c_void_p
    lib.BrotliDecoderCreateInstance.argtypes = [ctypes.c_void_p] * 3
    lib.BrotliDecoderDestroyInstance.argtypes = [ctypes.c_void_p]
    lib.BrotliDecoderDecompressStream.restype = ctypes.c_int
    lib.BrotliDecoderDecompressStream.argtypes = [
        ctypes.c_void_p,
        ctypes.POINTER(ctypes.c_size_t), ctypes.POINTER(ctypes.c_void_p),
        ctypes.POINTER(ctypes.c_size_t), ctypes.POINTER(ctypes.c_void_p),
        ctypes.POINTER(ctypes.c_size_t),
    ]
    return lib


@lru_cache(maxsize=None)
def _enc():
    lib = _load("brotlienc")
    lib.BrotliEncoderMaxCompressedSize.restype = ctypes.c_size_t
    lib.BrotliEncoderMaxCompressedSize.argtypes = [ctypes.c_size_t]
    lib.BrotliEncoderCompress.restype = ctypes.c_int
    lib.BrotliEncoderCompress.argtypes = [
        ctypes.c_int, ctypes.c_int, ctypes.c_int, ctypes.c_size_t,
        ctypes.c_char_p, ctypes.POINTER(ctypes.c_size_t), ctypes.c_char_p,
    ]
    return lib


def compress(data: bytes, quality: int = 11) -> bytes:
    lib = _enc()
    cap = lib.BrotliEncoderMaxCompressedSize(len(data)) or (len(data) + 1024)
    out = ctypes.create_string_buffer(cap)
    size = ctypes.c_size_t(cap)
    # lgwin 22, generic mode
    if not lib.BrotliEncoderCompress(quality, 22, 0, len(data), bytes(data), ctypes.byref(size), out):
        raise RuntimeError("Brotli compression failed")
    return out.raw[:size.value]


def decompress_prefix(data: bytes, offset: int = 0, max_output: int | None = None) -> tuple[bytes, int]:
    """Decode one Brotli stream starting at ``data[offset]``.

    Returns ``(decoded, consumed)``.  Raises :class:`IllFormed` if the stream
    is corrupt or truncated, or if it expands beyond ``max_output`` bytes.
    """
    lib = _dec()
    state = lib.BrotliDecoderCreateInstance(None, None, None)
    if not state:
        raise MemoryError("cannot create Brotli decoder")
    src = ctypes.create_string_buffer(bytes(data[offset:]), len(data) - offset)
    avail_in = ctypes.c_size_t(len(data) - offset)
    next_in = ctypes.c_void_p(ctypes.addressof(src))
    chunk = 1 << 16
    buf = ctypes.create_string_buffer(chunk)
    out = bytearray()
    try:
        while True:
            avail_out = ctypes.c_size_t(chunk)
            next_out = ctypes.c_void_p(ctypes.addressof(buf))
            res = lib.BrotliDecoderDecompressStream(
                state, ctypes.byref(avail_in), ctypes.byref(next_in),
                ctypes.byref(avail_out), ctypes.byref(next_out), None)
            out += buf.raw[:chunk - avail_out.value]
            if max_output is not None and len(out) > max_output:
                raise IllFormed("Brotli stream expands beyond its limit", offset)
            if res == _RESULT_SUCCESS:
                return bytes(out), len(data) - offset - avail_in.value
            if res == _RESULT_NEEDS_MORE_OUTPUT:
                continue
            if res == _RESULT_NEEDS_MORE_INPUT:
                raise IllFormed("truncated Brotli stream", len(data))
            raise IllFormed("corrupt Brotli stream", offset)
    finally:
        lib.BrotliDecoderDestroyInstance(state)


def decompress(data: bytes) -> bytes:
    out, used = decompress_prefix(data)
    if used != len(data):
        raise IllFormed("trailing bytes after Brotli stream", used)
    return out
