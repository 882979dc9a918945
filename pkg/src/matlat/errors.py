"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract: configuration problems exit 2,
failed checks exit 1, and runtime aborts (NaN, constraint floors) exit 3.
"""


class MatlatError(Exception):
    """Base class for all package-specific errors."""


class SingularMatrixError(MatlatError):
    """hat-conjugation or an inverse was requested for a (near-)singular matrix."""


class DegenerateLambdaError(MatlatError):
    """N-matrix construction with lambda = 0."""


class NotUnitaryError(MatlatError):
    """A matrix expected in U(2)/SU(2) failed the unitarity tolerance."""


class NoRealBranchError(MatlatError):
    """n1^2+n2^2+n3^2 < 1: no real central part completes det N = 1."""


class NotAntiHermitianError(MatlatError):
    """A matrix expected in u(2) failed the anti-Hermiticity tolerance."""


class NotInAlgebraError(MatlatError):
    """A field violated its declared Lie-algebra membership."""


class LatticeMismatchError(MatlatError):
    """Operands live on different lattices."""


class MissingFieldError(MatlatError):
    """A system kind requires a field the configuration does not supply."""


class ConstraintViolationError(MatlatError):
    """A hard pointwise precondition (e.g. |det| > |epsilon|) failed.

    Carries the offending flat site indices in ``sites`` when known.
    """

    def __init__(self, message, sites=None):
        super().__init__(message)
        self.sites = list(sites) if sites is not None else []


class GroupMismatchError(MatlatError):
    """Gauge field group does not match the system kind's declared group."""


class CFLViolationError(MatlatError):
    """Requested time step exceeds the CFL bound."""


class EvolutionAbortError(MatlatError):
    """Evolution halted early (NaN or constraint floor); last good state kept."""

    def __init__(self, message, state=None, time=None):
        super().__init__(message)
        self.state = state
        self.time = time


class ConfigError(MatlatError):
    """CLI configuration could not be parsed or validated."""
