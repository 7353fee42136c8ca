"""Exception types shared across the package."""


class SigmaFlowError(Exception):
    pass


class ConeViolation(SigmaFlowError):
    """Raised when sigma_1 of the Schouten eigenvalues is not positive.

    ``min_sigma1`` is the offending value and ``location`` the node (polar
    angle or height coordinate, whichever the caller had at hand) where it
    occurred.
    """

    def __init__(self, message, min_sigma1=None, location=None):
        super().__init__(message)
        self.min_sigma1 = min_sigma1
        self.location = location


class QuadratureError(SigmaFlowError):
    """Non-finite integrand sample."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class StepFailure(SigmaFlowError):
    pass
