"""Exception hierarchy shared by every diffrange module."""


class DiffRangeError(ValueError):
    """Base class for all library errors."""


class NonPositiveDistance(DiffRangeError):
    pass


class BadFrameSequence(DiffRangeError):
    pass


class NonPositiveHeight(DiffRangeError):
    pass


class OrderMismatch(DiffRangeError):
    pass


class DuplicateFrame(DiffRangeError):
    pass


class MissingAnnotation(DiffRangeError):
    pass


class RangeError(DiffRangeError):
    """Requested frame lies outside the available IMU records."""


class EmptySet(DiffRangeError):
    pass


class DegeneratePatch(DiffRangeError):
    pass


class NonPositiveC(DiffRangeError):
    pass


class EmptyBatch(DiffRangeError):
    pass


class ConfigError(DiffRangeError):
    pass


class ParseError(DiffRangeError):
    """Malformed input line.

    ``line`` is 1-based; ``column`` is the 1-based field index when the
    problem is a single field, otherwise ``None``.
    """

    def __init__(self, line, column, reason, source=None):
        self.line = line
        self.column = column
        self.reason = reason
        self.source = source
        where = f"{source}:" if source else "line "
        col = f", field {column}" if column is not None else ""
        super().__init__(f"{where}{line}{col}: {reason}")
