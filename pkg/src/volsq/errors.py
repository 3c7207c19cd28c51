"""Exception types raised across the package."""


class VolsqError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(VolsqError, ValueError):
    pass


class SingularDowndate(VolsqError, ValueError):
    pass


class SingularGram(VolsqError, ValueError):
    pass


class SingularCovariance(VolsqError, ValueError):
    pass


class BadSubsetSize(VolsqError, ValueError):
    pass


class BadShape(VolsqError, ValueError):
    pass


class DimensionMismatch(VolsqError, ValueError):
    pass


class TooLarge(VolsqError, ValueError):
    pass


class UnlabeledPoint(VolsqError, KeyError):
    pass


class Unavailable(VolsqError):
    """A closed-form quantity does not exist for this distribution or oracle."""


class UnboundedSupport(VolsqError):
    pass


class MissingSupportBound(VolsqError):
    pass


class LeverageBoundViolated(VolsqError):
    """A candidate had leverage above the configured bound K.

    Clamping the acceptance probability would silently change the output law,
    so the sampler stops instead.
    """


class RestartBudgetExceeded(VolsqError):
    pass


class FastRejectionViolated(VolsqError, AssertionError):
    """det(Sigma_tilde Sigma_hat^-1) exceeded 1 beyond round-off."""


class ConfigInvalid(VolsqError, ValueError):
    pass


class InsufficientData(VolsqError, ValueError):
    pass
