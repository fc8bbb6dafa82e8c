"""Exception types shared across the package."""


class KernelDomainError(ValueError):
    """Kernel applied to points outside its domain."""


class EmptySampleError(ValueError):
    """An operation received an empty sample set."""


class ZeroMedianError(ValueError):
    """Median heuristic got points whose pairwise distances are all zero."""


class SingularSystemError(ValueError):
    """A regularized linear system is singular (typically eps=0 with a rank-deficient matrix)."""


class NotPSDError(ValueError):
    """Incomplete Cholesky hit a negative pivot beyond tolerance."""


class DegenerateWeightsError(ValueError):
    """Weight vector has no positive entries, so it cannot be normalized."""


class PredictionFailureError(RuntimeError):
    """Posterior update impossible: predicted observation weights assign no mass to the realized observation."""


class ImpossibleObservationError(ValueError):
    """Exact filter received an observation with zero probability under the model."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""
