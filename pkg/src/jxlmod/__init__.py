"""Decoder and test encoder for the modular and lossless JPEG XL draft codestream."""
from .codestream import Codestream, Frame, Plane, decode_codestream, detect_signature
from .errors import EncoderError, IllFormed, Unsupported

__all__ = [
    "Codestream", "Frame", "Plane", "decode_codestream", "detect_signature",
    "EncoderError", "IllFormed", "Unsupported",
]
__version__ = "0.1.0"
