"""Exception types shared across the package."""


class OrderingError(ValueError):
    """Raised when a push would violate the monotone-timestamp contract."""


class EmptyBufferError(ValueError):
    """Raised when an operation requires at least one stored transition."""


class StaleIndexError(RuntimeError):
    """Raised when a bucket index is used past its staleness budget."""


class MinimizerPreconditionError(ValueError):
    """Raised when a gradient decomposition is requested at a point that does
    not minimize the previous-round loss."""


class ConfigError(ValueError):
    """Raised on invalid run configuration (bad key, bad value, bad enum)."""
