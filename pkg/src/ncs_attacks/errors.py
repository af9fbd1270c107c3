"""Exception hierarchy shared by the numerics, simulation and analysis layers."""


class NcsError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(NcsError, ValueError):
    pass


class SingularMatrix(NcsError, ArithmeticError):
    pass


class ConvergenceFailure(NcsError, ArithmeticError):
    pass


class ExpOverflow(NcsError, OverflowError):
    """Matrix exponential left the representable range."""


class NotHurwitz(NcsError, ValueError):
    pass


class AsymmetricMatrix(NcsError, ValueError):
    pass


class NotPositiveDefinite(NcsError, ValueError):
    pass


class NonFiniteState(NcsError, ArithmeticError):
    """A state vector became non-finite or exceeded the divergence sentinel."""


class DecompositionFailed(NcsError, ArithmeticError):
    """No reliable eigenvector basis could be built; supply (X, J) explicitly."""


class EmptyTrace(NcsError, ValueError):
    pass


class ConfigError(NcsError, ValueError):
    """Invalid scenario configuration. ``key`` names the offending entry."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
