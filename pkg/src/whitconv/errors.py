"""Exception hierarchy. The CLI maps DomainError to exit 2, the rest to exit 3."""


class WhitconvError(Exception):
    pass


class DomainError(WhitconvError, ValueError):
    """Invalid parameters or arguments outside the domain of a function."""


class PoleError(DomainError):
    pass


class NumericalError(WhitconvError, ArithmeticError):
    """A numerical procedure failed to reach its tolerance."""


class QuadratureError(NumericalError):
    pass


class TailEstimateError(NumericalError):
    """Spectral integrand did not decay, so no truncation point was found."""


class CoverageError(NumericalError):
    """Output grid does not carry enough of the mass."""


class BracketError(NumericalError):
    pass


class CostCapError(NumericalError):
    pass


class CalibrationError(NumericalError):
    pass


class DivergenceError(NumericalError):
    """A Richardson table or series did not stabilise."""
