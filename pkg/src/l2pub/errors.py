"""Shared exception types."""


class ConfigError(ValueError):
    """An experiment configuration is invalid or internally inconsistent.

    The message names the offending field or parameter.
    """


class StateSpaceError(ValueError):
    """A dynamic-programming instance exceeds the tractability guard.

    The message carries the estimated state/operation count so the caller
    can shrink the instance instead of waiting forever.
    """
