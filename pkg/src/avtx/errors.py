"""Exception hierarchy shared by every stage of the codec."""


class AvtxError(Exception):
    """Base class for all codec errors."""


class ParameterError(AvtxError, ValueError):
    """An argument is outside the range an operation accepts."""


class TruncationError(AvtxError):
    """The decoder ran out of coded bytes."""


class ConformanceError(AvtxError):
    """A decoded value violates a syntax or semantic constraint."""


class ParseError(AvtxError):
    """A byte stream (container, corpus, QM) is malformed.

    ``offset`` is the byte position where parsing failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedVersionError(ParseError):
    pass
