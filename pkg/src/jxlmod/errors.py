"""Exception types shared by the decoders and encoders."""


class IllFormed(Exception):
    """The codestream breaks a format rule.

    ``offset`` is the byte index the decoder had reached when the problem was
    detected, or None when the position is unknown.
    """

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset

    def __str__(self):
        base = super().__str__()
        if self.offset is None:
            return base
        return f"{base} (at byte {self.offset})"


class Unsupported(Exception):
    """Well-formed input that this decoder deliberately does not handle."""


class EncoderError(ValueError):
    """Raised by the reference encoders for inputs they cannot represent."""
