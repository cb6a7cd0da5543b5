"""Exception types shared across the package."""


class PhaseOptError(Exception):
    """Base class for all errors raised by phaseopt."""


class QuadratureError(PhaseOptError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class GridFormatError(PhaseOptError, ValueError):
    """A grid or signal file could not be parsed.

    The message always names the offending line (1-based).
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DomainMismatchError(PhaseOptError, ValueError):
    """Two densities are not defined on the same domain."""


class DegenerateDensityError(PhaseOptError, ValueError):
    """A density has non-positive total mass where a probability is needed."""


class NotNormalizedError(PhaseOptError, ValueError):
    """The input Wigner function does not integrate to one."""

    def __init__(self, total, tol):
        self.total = total
        super().__init__(f"input integrates to {total:.12g}, expected 1 within {tol:g}")


class BracketError(PhaseOptError):
    """A monotone root-find could not bracket its root."""


class ConvergenceError(PhaseOptError):
    """An iterative solver ran out of iterations.

    ``result`` holds the last iterate with its residuals.
    """

    def __init__(self, message, result=None):
        self.result = result
        super().__init__(message)
