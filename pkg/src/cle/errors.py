"""Exception hierarchy shared across the package."""


class CLEError(Exception):
    """Base class for all errors raised by this package."""


class EmptyInstance(CLEError):
    pass


class SchemaMismatch(CLEError):
    pass


class OutOfRange(CLEError, UserWarning):
    """Warning category for numeric values outside the training range."""


class DimensionMismatch(CLEError):
    pass


class SpecInvalid(CLEError):
    pass


class MissingContext(CLEError):
    pass


class LengthMismatch(CLEError):
    pass


class NotConverged(CLEError):
    """Coordinate descent hit ``max_iter``; carries the partial solution."""

    def __init__(self, beta, n_iter):
        super().__init__(f"coordinate descent did not converge in {n_iter} sweeps")
        self.beta = beta
        self.n_iter = n_iter


class Degenerate(CLEError):
    pass


class ModelFailure(CLEError):
    pass


class ProtocolError(ModelFailure):
    pass


class PeerExit(ModelFailure):
    pass


class Timeout(ModelFailure):
    pass


class SingleClass(CLEError):
    pass


class Unsupported(CLEError):
    pass


class PairGenerationFailed(CLEError):
    pass


class ConfigError(CLEError):
    pass
