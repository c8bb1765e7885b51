"""Exceptions shared across pipeline stages."""


class EmptyInput(ValueError):
    """An aggregate operation received no data to work on."""
