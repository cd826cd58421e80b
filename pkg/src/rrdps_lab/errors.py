"""Shared exception types."""


class ParameterError(ValueError):
    """A parameter violates an operation's precondition."""


class ParityConflictError(ValueError):
    """Two observations of the same pulse pair disagree on their relative
    phase.  Cannot happen for honestly harvested data; guards the API."""


class ModelError(ValueError):
    """An attack model's matrices have the wrong shape or are not isometric."""


class StateError(RuntimeError):
    """Operation applied in the wrong round state, e.g. reading the
    eavesdropper's bit on a lost round."""


class UsageError(ValueError):
    """Bad command line or config file input."""
