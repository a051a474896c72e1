"""Exception types raised across the package."""


class HeliotrapError(Exception):
    """Base class for package errors."""


class InputError(HeliotrapError, ValueError):
    """Rejected input (non-finite entries, bad shapes, invalid parameters)."""


class GeometryError(HeliotrapError, ValueError):
    """Invalid electrode geometry or mismatched grid geometry."""


class GridFormatError(HeliotrapError, ValueError):
    """Malformed or unsupported unit-potential grid file."""


class ConvergenceError(HeliotrapError, RuntimeError):
    """An iterative procedure did not reach its tolerance within budget."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DomainError(HeliotrapError, ValueError):
    """Point outside the region where the potential can be evaluated."""


class SingularityError(HeliotrapError, ValueError):
    """Two electrons closer than the coincidence floor."""


class UnconfinedError(HeliotrapError, RuntimeError):
    """No start of the minimizer stayed inside the trap."""


class FitError(HeliotrapError, RuntimeError):
    """Resonance fit failed (singular Jacobian, no convergence)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
