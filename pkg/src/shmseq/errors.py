"""Exception types shared across the toolkit."""


class ShmSeqError(Exception):
    """Base class for all shmseq errors."""


class ZeroVariance(ShmSeqError):
    """A signal chunk has (near-)zero standard deviation, e.g. a dead sensor."""


class SingularDesign(ShmSeqError):
    """The AR lag regressor matrix is rank deficient."""


class NotPositiveDefinite(ShmSeqError):
    """A covariance matrix is not positive definite above the configured floor."""


class DimensionMismatch(ShmSeqError):
    """Vector/matrix dimensions of two distributions do not agree."""


class DegenerateDelay(ShmSeqError):
    """The delay formula denominator is zero (no prior drift and zero divergence)."""


class EmptyStream(ShmSeqError):
    """An estimator was asked to fit parameters from zero samples."""


class EstimatesUnready(ShmSeqError):
    """Post-change estimates requested before the warm-up sample count is reached."""


class InsufficientTraining(ShmSeqError):
    """Too few training vectors to fit a baseline distribution."""


class EigenFailure(ShmSeqError):
    """The structural eigenproblem could not be solved."""


class ConfigError(ShmSeqError):
    """Invalid, inconsistent or unparsable pipeline configuration or input file."""
