"""Exception types shared across the engine."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class NumericFault(ArithmeticError):
    """Non-finite values where finite ones are required (NaN/Inf in params or grads)."""


class StrokeFileError(ValueError):
    """Malformed stroke file. Carries the byte offset of the offending record."""

    def __init__(self, message: str, byte_offset: int | None = None):
        if byte_offset is not None:
            message = f"{message} (byte offset {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset
