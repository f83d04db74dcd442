"""Exception hierarchy.

Everything numerical derives from :class:`PhysicsError` so the CLI can map it
onto a single exit code.
"""


class IongradError(Exception):
    """Base class for all package errors."""


class ConfigError(IongradError):
    """Invalid or unreadable run configuration."""


class PhysicsError(IongradError):
    """A physical model could not be evaluated."""


class SolverError(PhysicsError):
    """Equilibrium solver failed to converge."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class StructuralInstabilityError(PhysicsError):
    """A transverse mode went soft: the linear chain is not stable."""

    def __init__(self, axis, mode_index, mu):
        super().__init__(
            f"radial axis {axis!r}: mode {mode_index} has non-positive "
            f"curvature mu={mu:.4g}; the linear chain is unstable (zig-zag)"
        )
        self.axis = axis
        self.mode_index = mode_index
        self.mu = mu


class CalibrationError(PhysicsError):
    """Drive could not be calibrated to a maximally entangling phase."""


class ModelInconsistencyError(PhysicsError):
    """Noise parameters are mutually inconsistent (e.g. T2 > 2 T1)."""


class TruncationError(PhysicsError):
    """Fock-space truncation too small for the simulated dynamics."""

    def __init__(self, leakage, n_max):
        super().__init__(
            f"population {leakage:.3e} in the top two Fock levels at n_max={n_max}; "
            f"rerun with a larger n_max"
        )
        self.leakage = leakage
        self.n_max = n_max


class FitError(PhysicsError):
    """A least-squares fit failed or is degenerate."""

    def __init__(self, message, residual=None):
        if residual is not None:
            message = f"{message} (residual {residual:.3e})"
        super().__init__(message)
        self.residual = residual
