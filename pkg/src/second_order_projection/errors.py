"""Exception hierarchy shared by the numerical modules and the CLI."""


class SecondOrderProjectionError(Exception):
    """Base class for all package errors."""


class ConfigError(SecondOrderProjectionError, ValueError):
    """Invalid run configuration or violated precondition coming from it."""


class NumericalError(SecondOrderProjectionError, RuntimeError):
    """A numerical component failed to produce a trustworthy result."""


class EigensolverError(NumericalError):
    """Dense eigensolver did not converge."""

    def __init__(self, dim: int, n: int | None = None, reason: str = ""):
        self.dim = dim
        self.n = n
        where = f"pencil of dimension {dim}"
        if n is not None:
            where += f" (truncation n={n})"
        message = f"Eigensolver failed for {where}"
        if reason:
            message += f": {reason}"
        super().__init__(message)


class QuadratureError(NumericalError):
    """Quadrature did not reach the requested accuracy."""


class OracleError(NumericalError):
    """Reference computation failed its own consistency checks."""


class StructureError(NumericalError, ValueError):
    """Assembled matrices lost a structural property: Hermitian symmetry or a semidefinite defect."""
