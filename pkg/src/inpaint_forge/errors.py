"""Exception taxonomy; the CLI maps these onto exit codes."""


class InpaintForgeError(Exception):
    """Base for all package errors."""


class ValidationError(InpaintForgeError):
    """Bad arguments, configs, or inputs that fail a contract (exit 2)."""


class ConfigError(ValidationError):
    pass


class DataError(InpaintForgeError):
    """Unreadable or malformed files and missing resources (exit 3)."""


class WeightsNotFoundError(DataError):
    pass


class CheckpointError(DataError):
    pass


class NonFiniteLossError(InpaintForgeError):
    """Training produced a NaN/inf loss (exit 4)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
