"""Error taxonomy.

Two families matter to callers: numerical failures (a factorization or a
rank condition broke down mid-run, CLI exit code 1) and validation failures
(the problem statement itself is malformed, CLI exit code 2).
"""


class UmvfError(Exception):
    """Base class for all errors raised by this package."""


class NumericalError(UmvfError):
    """A numerical operation failed on otherwise well-formed inputs."""


class ValidationError(UmvfError):
    """The model, scenario, or configuration violates a stated assumption."""


class NotPositiveDefinite(NumericalError):
    """A matrix required to be positive definite failed its factorization."""


class JointCovarianceIndefinite(NumericalError):
    """A joint covariance block has an eigenvalue below -1e-9 * trace."""


class RankDeficient(NumericalError):
    """A rank condition required by the selected filter path does not hold."""


class SingularKkt(NumericalError):
    """The stacked stationarity/constraint system is singular."""


class DimensionMismatch(ValidationError):
    """A matrix or vector has a shape inconsistent with the declared sizes."""


class LengthMismatch(ValidationError):
    """Two sequences that must be aligned have different lengths."""


class ConfigError(ValidationError):
    """A scenario configuration file could not be parsed or validated."""
