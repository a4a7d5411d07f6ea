"""Exception hierarchy. Input errors and numerical failures are kept apart
so the CLI can map them to distinct exit codes."""


class NeumannDomainError(Exception):
    """Base class for all package errors."""


class InputError(NeumannDomainError):
    """Malformed or inconsistent user input (exit code 2)."""


class NumericalError(NeumannDomainError):
    """A numerical procedure failed or refused to proceed (exit code 3)."""


class FieldFormatError(InputError):
    """Field JSON document does not match the expected schema."""


class MixedEigenvalueError(InputError):
    """Mode list does not belong to a single Laplacian eigenspace."""


class PointOutsideDomain(InputError):
    """Evaluation point outside a rectangle domain."""


class DegenerateCriticalPoint(NumericalError):
    """A critical point with near-singular Hessian: the field is not Morse
    within tolerance, so classification is refused."""


class NewtonDivergence(NumericalError):
    """The critical-point search cannot account for a near-zero of the
    gradient seen on the residual scan grid."""


class StepBudgetExceeded(NumericalError):
    """Flow integration ran out of steps before capture or boundary exit."""


class StagnationWithoutCapture(NumericalError):
    """The flow stalled (tiny gradient) far from every known critical point,
    which means the critical-point search missed one."""


class NoSaddles(NumericalError):
    """The field has an empty saddle set; the Neumann line set is empty and
    the partition machinery does not apply."""


class ResolutionTooCoarse(NumericalError):
    """More than the allowed fraction of raster cells could not be labeled."""


class EmptyMask(InputError):
    """An operator was requested on an empty cell set."""


class ConvergenceFailure(NumericalError):
    """The sparse eigensolver did not converge."""


class NoMatchingEigenvalue(NumericalError):
    """No eigenvalue of the domain spectrum lies within matching tolerance
    of the field eigenvalue; carries the bracketing pair for diagnostics."""

    def __init__(self, lam, below, above):
        self.lam = lam
        self.below = below
        self.above = above
        super().__init__(
            f"no eigenvalue within tolerance of {lam}; brackets: {below}, {above}"
        )


class LiftFailure(NumericalError):
    """A torus mask wraps around the fundamental domain and has no planar
    lift; metric quantities are not defined for it."""
