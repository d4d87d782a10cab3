"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid user input: bad config keys, malformed data files, bad parameters."""


class NumericsError(RuntimeError):
    """A numerical routine failed or produced an unusable result."""


class PropagationError(NumericsError):
    """Time propagation could not be carried out at the requested accuracy."""


class MonotonicityError(NumericsError):
    """The optimizer observed an increase of the total functional."""
