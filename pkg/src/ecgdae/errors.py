"""Exception types shared across the package."""


class EcgDaeError(Exception):
    """Base class for all package errors."""


class ParseError(EcgDaeError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TruncationError(EcgDaeError):
    def __init__(self, expected, actual):
        self.expected = expected
        self.actual = actual
        super().__init__(f"signal stream truncated: expected {expected} bytes, got {actual}")


class UnsupportedFormat(EcgDaeError):
    pass


class RangeError(EcgDaeError):
    def __init__(self, channel, index, value):
        self.channel = channel
        self.index = index
        self.value = value
        super().__init__(f"channel {channel} sample {index}: raw value {value} outside 12-bit range")


class InsufficientSignal(EcgDaeError):
    pass


class ClassShortage(EcgDaeError):
    def __init__(self, label, available, required):
        self.label = label
        self.shortfall = required - available
        super().__init__(
            f"class {label!r}: {available} windows available, {required} required "
            f"(short by {self.shortfall})"
        )


class ZeroPowerError(EcgDaeError):
    pass


class LengthError(EcgDaeError):
    pass


class ShapeError(EcgDaeError):
    pass


class StateError(EcgDaeError):
    pass


class DivergenceFault(EcgDaeError):
    def __init__(self, epoch, batch, message="non-finite loss"):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"{message} at epoch {epoch}, batch {batch}")


class VersionError(EcgDaeError):
    pass


class SpecError(EcgDaeError):
    pass


class ConfigError(EcgDaeError):
    pass
