"""Exception hierarchy shared by every stage of the pipeline."""


class MotionGraderError(Exception):
    """Base class for all toolkit errors."""


class DataError(MotionGraderError):
    """Input data is malformed or inconsistent."""


class ConfigError(MotionGraderError):
    """A configuration value is invalid."""


class ParseError(DataError):
    def __init__(self, line: int, found: int | None = None, expected: int | None = None,
                 message: str | None = None, source: str | None = None):
        self.line = line
        self.found = found
        self.expected = expected
        self.source = source
        if message is None:
            message = f"found {found} columns, expected {expected}"
        where = f"{source}:" if source else "line "
        super().__init__(f"{where}{line}: {message}")


class EmptyRecording(DataError):
    pass


class LengthMismatch(DataError):
    pass


class IoError(DataError, OSError):
    pass


class DuplicateSample(DataError):
    pass


class InvalidHierarchy(DataError):
    pass


class SizeMismatch(DataError):
    pass


class EmptyInput(DataError):
    pass


class PadTooShort(DataError):
    pass


class ShapeError(MotionGraderError, ValueError):
    pass


class DegenerateBatch(MotionGraderError, ValueError):
    pass


class LabelError(MotionGraderError, ValueError):
    pass
