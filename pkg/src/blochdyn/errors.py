"""Exception hierarchy shared by all modules.

Two bases: `SpecError` marks invalid inputs or violated preconditions
(the CLI maps these to exit code 2), `NumericsError` marks runtime
numerical failures such as unmet tolerances (exit code 3).
"""


class SpecError(ValueError):
    """Invalid specification, configuration, or violated precondition."""


class NumericsError(RuntimeError):
    """A computation ran but failed a numerical requirement."""


# --- operator construction -------------------------------------------------

class SingularOffDiagonal(SpecError):
    """Some off-diagonal block has |det| below the invertibility tolerance."""


class NonHermitianDiagonal(SpecError):
    """Some diagonal block is not Hermitian within tolerance."""


class DimensionMismatch(SpecError):
    """Array shapes are inconsistent with the declared block dimensions."""


class SizeLimitExceeded(SpecError):
    """Requested dense truncation exceeds the dense-solver guard."""


# --- Floquet / quadrature --------------------------------------------------

class GridTooCoarse(SpecError):
    """The quasi-momentum grid is below the minimum size or the quadrature
    error estimate exceeds the requested tolerance."""


# --- time evolution --------------------------------------------------------

class SupportOutsideWindow(SpecError):
    """Wave packet support is not contained in the truncation window."""


class WindowTooSmall(SpecError):
    """Truncation window violates the evolution margin rule for the
    requested time."""


# --- XY chain ---------------------------------------------------------------

class InvalidSpec(SpecError):
    """XY chain parameters violate the free-fermion validity constraints."""


class ChainTooLong(SpecError):
    """Spin chain length exceeds the dense exact-diagonalization limit."""


# --- transfer matrices / limit-periodic ------------------------------------

class WindowTooShort(SpecError):
    """Potential window does not cover the requested number of steps."""


class QuadratureNotConverged(NumericsError):
    """Adaptive or grid quadrature failed to reach the requested accuracy."""


class PsiEnvelopeViolated(SpecError):
    """Initial state exceeds the declared exponential envelope."""


class NoCertificateFound(NumericsError):
    """Search budget exhausted without a valid (time, radius) certificate."""


# --- CLI ---------------------------------------------------------------------

class ConfigInvalid(SpecError):
    """Experiment configuration failed schema validation."""
