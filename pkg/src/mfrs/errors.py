"""Exception and warning types shared across the package."""


class MfrsError(Exception):
    """Base class for all package-specific errors."""


class InputError(MfrsError):
    """Malformed or inconsistent user input (config files, overrides, bad arguments)."""


class NonFiniteInput(InputError):
    """A model or parameter contains NaN or infinite entries."""


class NonpositiveRho(MfrsError):
    """The running-cost multiplier in the augmented Hamiltonian must be positive."""


class EmptyBounds(InputError):
    """Degenerate control interval passed to the numeric minimizer."""


class BlowUpInput(MfrsError):
    """An operation received a Riccati solution that blew up before t=0."""


class NonFiniteState(MfrsError):
    """A particle state became NaN or infinite during simulation."""

    def __init__(self, step: int, particle: int):
        self.step = step
        self.particle = particle
        super().__init__(
            f"non-finite particle state at step {step}, particle {particle}"
        )


class EmptyTrajectory(MfrsError):
    """A trajectory that does not reach the terminal time was passed to an estimator."""


class CflViolation(MfrsError):
    """Explicit time step too large for the grid; carries the largest admissible dt."""

    def __init__(self, dt_required: float):
        self.dt_required = dt_required
        super().__init__(
            f"CFL condition violated; largest admissible dt is {dt_required:.6g}"
        )


class MassLoss(MfrsError):
    """Accumulated boundary leakage exceeded tolerance; the spatial domain is too small."""


class IntegrabilityViolation(MfrsError):
    """The Gaussian exponential moment diverges for the given risk index and variance."""


class DomainTruncationWarning(UserWarning):
    """Boundary cells carry a non-negligible share of the terminal integrand."""
