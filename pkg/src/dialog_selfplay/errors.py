"""Exception hierarchy shared by the game, solver and CLI layers."""


class GameError(Exception):
    """Base class for every error raised by this package."""


class ParseError(GameError):
    """A game or profile file could not be parsed.

    ``where`` names the offending line or field when known.
    """

    def __init__(self, message, where=None):
        self.where = where
        if where is not None:
            message = f"{where}: {message}"
        super().__init__(message)


class ValidationError(GameError):
    """A structurally parsed game violates a game-tree invariant."""


class DanglingReference(ValidationError):
    pass


class ProbabilitySumViolation(ValidationError):
    pass


class InfoSetMismatch(ValidationError):
    pass


class NotATree(ValidationError):
    pass


class MissingInfoSetDistribution(GameError):
    pass


class MissingAnnotation(GameError):
    pass


class DimensionMismatch(GameError):
    pass


class DegenerateBasis(GameError):
    """A candidate basis has a singular constraint matrix."""


class InternalVerificationFailure(GameError):
    """A computed equilibrium candidate failed its own certificate."""


class EmptyList(GameError, ValueError):
    pass


class EmptyBatch(GameError, ValueError):
    pass


class ShapeMismatch(GameError):
    """The tree does not have the chance -> user -> agent -> terminal shape."""


class EmptySupportAtInfoSet(UserWarning):
    """An information set is unreachable under every supported pure strategy."""
