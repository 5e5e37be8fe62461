"""Exception types shared across the package."""


class TtssaError(Exception):
    """Base class for all package errors."""


class ConfigError(TtssaError):
    """Invalid or inconsistent experiment configuration."""


class SingularMatrix(TtssaError):
    """A11 or the reduced matrix is numerically singular (condition > 1e12)."""


class NotPositive(TtssaError):
    """A symmetric part that must be positive definite has an eigenvalue <= 0."""


class NotErgodic(TtssaError):
    """The chain failed the irreducibility/aperiodicity check."""


class NonFinite(TtssaError):
    """Iterate magnitude exceeded the divergence guard.

    Carries ``step`` (global iteration index) and optionally ``trajectory``.
    """

    def __init__(self, step, trajectory=None):
        self.step = step
        self.trajectory = trajectory
        where = f"step {step}"
        if trajectory is not None:
            where += f", trajectory {trajectory}"
        super().__init__(f"iterate diverged ({where})")


class InsufficientData(TtssaError):
    """Not enough points for a requested fit."""


class Diverges(TtssaError):
    """The step-size series does not converge for this schedule."""


class NotFound(TtssaError):
    """No index satisfying the transient-index conditions within the scan cap."""


class FeatureScale(TtssaError):
    """Feature map induces coefficient blocks above the 1/4 norm bound."""


class Overflow(TtssaError):
    """A constant or iteration count saturated its representable range."""


class BudgetExceeded(TtssaError):
    """Restarted run hit the epoch safety cap before reaching the target."""
