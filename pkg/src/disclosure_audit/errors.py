"""Exception hierarchy.

Validation problems derive from :class:`ValidationError` and storage or
journal problems from :class:`StorageError`; the CLI maps the two families
onto exit codes 1 and 2.
"""


class AuditError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(AuditError, ValueError):
    pass


class StorageError(AuditError):
    pass


# ingest
class MalformedAccession(ValidationError):
    pass


class SchemaViolation(ValidationError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IoFailure(StorageError, OSError):
    pass


# semantic / temporal
class DegenerateSigma(ValidationError):
    pass


class InsufficientHistory(ValidationError):
    pass


class ZeroVariance(ValidationError):
    pass


# econometrics
class IncompleteWindow(ValidationError):
    pass


class ZeroShock(ValidationError):
    pass


class RankDeficient(ValidationError):
    pass


class TooFewClusters(ValidationError):
    pass


class DegenerateVariance(ValidationError):
    pass


# orchestration
class JournalCorrupt(StorageError):
    pass


class CyclicGraph(ValidationError):
    pass


class SimulatedCrash(AuditError):
    """Raised by the kill-point test hook right after a journal append."""


# supervisor
class MissingMoments(ValidationError):
    pass


class TooManyFeatures(ValidationError):
    pass


# config / generator
class ConfigError(ValidationError):
    pass


class InvalidSpec(ValidationError):
    pass
