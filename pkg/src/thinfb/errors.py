"""Exception hierarchy shared by all thinfb modules."""


class ThinFBError(Exception):
    """Base class for every error raised by thinfb."""


class NoConvergence(ThinFBError):
    """An iterative method ran out of its iteration budget."""


class ClassViolation(ThinFBError):
    """Barrier parameters lie outside the requested class V_delta."""


class PreconditionViolation(ThinFBError):
    """Inputs violate a documented precondition of an audit."""


class AuditFailure(ThinFBError):
    """A numerical audit could not verify the requested inequality."""


class NotFlat(ThinFBError):
    """No hodograph root exists in the flatness bracket at some node."""


class NonInjective(ThinFBError):
    """The displacement map X -> X - eps*phi(X) e_n folds."""


class NeverFlat(ThinFBError):
    """Trapping between translates of U fails even at eps_max."""


class TraceViolation(ThinFBError):
    """A half-disk field does not vanish (or is not even) where required."""


class PoorFit(ThinFBError):
    """Least-squares residual exceeds the configured bound."""


class BudgetExhausted(ThinFBError, RuntimeWarning):
    """The flip budget ran out before the minimizer converged."""


class EmptyBoundary(ThinFBError):
    """The positivity mask has no boundary inside the region."""


class FitFailure(ThinFBError):
    """A regression fit is unusable (too few points or too large residual)."""


class NoContact(ThinFBError):
    """A sliding barrier never touches the solution within the slide range."""


class InsufficientScales(ThinFBError):
    """Fewer than three scales remain above grid resolution."""


class NotTrapped(ThinFBError):
    """The state is not trapped by the fitted barrier at the top scale."""


class DegenerateRatio(ThinFBError):
    """The denominator of a ratio audit is below its floor everywhere."""


class MissingManifest(ThinFBError):
    """A run directory does not contain a manifest."""


class ConfigError(ThinFBError):
    """An experiment specification is malformed or incomplete."""
