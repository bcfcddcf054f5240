"""Exception types shared across the library."""


class JacospecError(Exception):
    """Base class for all library-specific errors."""


class NumericalOverflowError(JacospecError):
    """A computation produced a non-finite value."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class ConvergenceError(JacospecError):
    """An iterative solver failed to converge; carries the last iterate."""

    def __init__(self, message, last_iterate=None, iterations=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.iterations = iterations
        self.residual = residual


class NoRootInBracketError(JacospecError):
    """A one-dimensional root search found no sign change in its bracket."""


class DegenerateCriticalLineError(JacospecError):
    """The critical set collapses to a single point (linear / ReLU).

    Carries the unique critical point as (sigma_w_sq, sigma_b_sq).
    """

    def __init__(self, message, critical_point=None):
        super().__init__(message)
        self.critical_point = critical_point


class UnsupportedNonlinearityError(JacospecError):
    """The requested quantity is undefined for this nonlinearity."""


class DegenerateLawError(JacospecError):
    """A slope law with zero linear fraction: the spectrum is identically 0."""


class BranchSelectionError(JacospecError):
    """Root tracking picked up (or could not find) the physical branch.

    ``z`` records the point of the complex plane at which selection failed.
    """

    def __init__(self, message, z=None):
        super().__init__(message)
        self.z = z


class SupportDomainError(JacospecError):
    """Evaluation requested at a point where the transform is singular."""


class VariableMismatchError(JacospecError):
    """Two spectra use different variables (eigenvalue vs singular value)."""


class ExperimentError(JacospecError):
    """Too many Monte Carlo trials failed; carries the per-trial errors."""

    def __init__(self, message, failures=()):
        super().__init__(message)
        self.failures = list(failures)
