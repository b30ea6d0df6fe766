"""Shared exception types."""


class InvalidInputError(ValueError):
    """An operation received arguments violating its preconditions."""


class ConfigError(ValueError):
    """A configuration field (or combination of fields) is invalid."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class StateError(RuntimeError):
    """An operation was invoked on an object in the wrong state."""


class PluginProtocolError(RuntimeError):
    """An external embedding plugin violated the wire contract."""
