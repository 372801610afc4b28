"""Exception hierarchy for the moderation cascade.

Three branches map onto distinct CLI exit codes so scripts can tell
configuration mistakes, bad data, and backend trouble apart.
"""

from __future__ import annotations


class CascadeError(Exception):
    """Base class for every error raised by this package."""


class ConfigInvalid(CascadeError):
    """Run or component configuration is unusable; nothing was processed."""


class DataError(CascadeError):
    """Input data violates a contract (shape, range, identity, or schema)."""


class BackendError(CascadeError):
    """A ranker backend misbehaved."""


# --- data errors -----------------------------------------------------------


class DimensionMismatch(DataError):
    """Embedding length differs from the required dimension."""


class NonFiniteValue(DataError):
    """NaN or infinity where a finite number is required."""


class EmptyId(DataError):
    """Item identifier is empty."""


class DuplicateItemId(DataError):
    """Two stream items share an identifier."""


class ZeroVector(DataError):
    """Cosine similarity is undefined for an all-zero vector."""


class OutOfRange(DataError):
    """Numeric argument outside its documented interval."""


class UnknownIssue(DataError):
    """Issue tag not present in the configured taxonomy."""


class EmptyBank(DataError):
    """Routing requires at least one seed."""


class EmptySample(DataError):
    """Calibration requires at least one sample item."""


class CorpusTooSmall(DataError):
    """Fewer corpus elements than requested clusters."""


class DegenerateCorpus(DataError):
    """All corpus points identical; multiple clusters are meaningless."""


class DuplicateSeedId(DataError):
    """Seed id already present in the bank."""


class UnknownSeedId(DataError):
    """Seed id not present in the bank."""


class DegenerateLabels(DataError):
    """Metric needs both a positive and a negative example."""


class NoPositives(DataError):
    """Metric needs at least one positive example."""


class MissingQuestionScore(DataError):
    """Fusion needs both the fine-grained and the overall probability."""


class InconsistentStreams(DataError):
    """Verdicts, decisions, and truth do not describe the same items."""


class StreamMismatch(DataError):
    """Compared runs were produced from different item streams."""


class MalformedRecord(DataError):
    """A line-record file contains a record that does not match its schema."""


# --- backend errors --------------------------------------------------------


class BackendUnavailable(BackendError):
    """Backend did not answer (timeout, connection refused); retryable."""


class BackendMalformed(BackendError):
    """Backend answered with something outside the wire contract."""


class MissingToken(BackendMalformed):
    """Backend response lacks a logit for Y or N."""


class NonFiniteLogit(BackendMalformed):
    """Backend returned a NaN or infinite logit."""


class Unreachable(BackendError):
    """Backend could not be probed at all."""
