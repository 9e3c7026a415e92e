"""Exception types shared across the engine."""


class ParameterError(ValueError):
    """A configuration value or argument is outside its allowed range."""


class StreamError(RuntimeError):
    """A sample stream violated its ordering contract (e.g. timestamp regression)."""


class StateError(RuntimeError):
    """An operation was attempted in a session phase that does not allow it."""


class UndefinedMetricError(RuntimeError):
    """A metric has no defined value for the given log (e.g. no HR-bearing ticks)."""
