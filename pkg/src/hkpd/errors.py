class HKPDError(Exception):
    """Base class for library errors."""


class InvalidInputError(HKPDError, ValueError):
    pass


class UnsupportedRequestError(HKPDError, ValueError):
    pass


class DomainViolationError(HKPDError, ValueError):
    """A diagram point fell outside the standardized triangle; the domain map is stale."""


class IncompatibleEmbeddingError(HKPDError, ValueError):
    """Embeddings built on different bases or domain maps were combined."""
