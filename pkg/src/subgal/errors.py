"""Exception types shared across the library."""


class ContractViolationError(ValueError):
    """An argument violates an interface contract (shape, dimension, range)."""


class ConfigurationError(ValueError):
    """A run or space configuration is malformed or inconsistent."""


class ExponentError(ConfigurationError):
    """Integrability exponents violate the admissibility requirement q > 2*sigma'."""


class DataError(ValueError):
    """Supplied data evaluated to something unusable (NaN/inf) at a needed point."""


class HypothesisViolationError(RuntimeError):
    """Coefficient data violates a structural hypothesis (symmetry, PSD-ness, subunit bound)."""


class NotComparableError(HypothesisViolationError):
    """The principal matrix field is not two-sided comparable to the reference form."""

    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = point


class SolverFailureError(RuntimeError):
    """A linear solve did not reach the required residual."""


class UnsolvableConfigurationError(SolverFailureError):
    """The coercivity certificate could not be established within the retry budget."""


class InternalConsistencyError(RuntimeError):
    """An internally derived object failed a property it is constructed to satisfy."""
