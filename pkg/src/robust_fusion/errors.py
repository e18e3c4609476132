"""Exception hierarchy shared by the numerical layers."""


class FusionError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(FusionError, ValueError):
    pass


class NonFiniteError(FusionError, ValueError):
    pass


class SingularMatrix(FusionError, ArithmeticError):
    """Elimination hit a pivot below the relative tolerance."""


class NoConvergence(FusionError, ArithmeticError):
    pass


class DegenerateSpectrum(FusionError, ArithmeticError):
    """Some eigenvalue sum of the Sylvester operands is (numerically) zero."""


class ZeroMass(FusionError, ValueError):
    pass


class EmptyClass(FusionError, ValueError):
    pass


class DomainError(FusionError, ValueError):
    pass
