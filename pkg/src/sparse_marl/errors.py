"""Exception types shared across the package."""


class SparseMarlError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(SparseMarlError, ValueError):
    pass


class NonFinite(SparseMarlError, FloatingPointError):
    pass


class NotScalar(SparseMarlError, ValueError):
    pass


class DetachedRoot(SparseMarlError, RuntimeError):
    """backward() was called on a value with no path to a trainable leaf."""


class EmptySupport(SparseMarlError, ValueError):
    pass


class NoAvailableAction(SparseMarlError, ValueError):
    pass


class InvalidConfig(SparseMarlError, ValueError):
    pass


class UnavailableAction(SparseMarlError, ValueError):
    pass


class EpisodeFinished(SparseMarlError, RuntimeError):
    """step() called on an environment whose episode already terminated."""


class EmptyBatch(SparseMarlError, ValueError):
    pass


class InsufficientData(SparseMarlError, RuntimeError):
    pass


class CheckpointMismatch(SparseMarlError, ValueError):
    pass


class ConfigError(SparseMarlError, ValueError):
    """Aggregated configuration problems; ``errors`` maps field -> message."""

    def __init__(self, errors):
        self.errors = dict(errors)
        lines = [f"{k}: {v}" for k, v in self.errors.items()]
        super().__init__("invalid config:\n  " + "\n  ".join(lines))
