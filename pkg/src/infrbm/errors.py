class DimensionError(ValueError):
    """Array shapes disagree with the model or dataset dimensions."""


class NotStandardError(ValueError):
    """A fractional mixture was passed where a standard RBM is required."""


class CapacityError(ValueError):
    """Exact enumeration requested over more states than the guard allows."""


class FormatError(ValueError):
    """Malformed binary/text input.  ``offset`` is the byte (or line) position."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset
