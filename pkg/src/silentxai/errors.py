"""Exception types shared across the toolkit."""


class SilentXaiError(Exception):
    """Base class for domain errors (CLI exit code 1)."""


class ZeroVariance(SilentXaiError):
    pass


class InvalidConfig(SilentXaiError):
    pass


class UnknownFeature(SilentXaiError):
    pass


class SchemaMismatch(SilentXaiError):
    def __init__(self, missing=(), extra=(), message=None):
        self.missing = list(missing)
        self.extra = list(extra)
        if message is None:
            message = f"CSV schema mismatch: missing={self.missing} extra={self.extra}"
        super().__init__(message)


class DegenerateDataset(SilentXaiError):
    pass


class DimensionMismatch(SilentXaiError, ValueError):
    pass


class EmptyBackground(SilentXaiError):
    pass


class TooManyFeatures(SilentXaiError):
    pass


class InsufficientData(SilentXaiError):
    pass


class UnknownStoreId(SilentXaiError, KeyError):
    pass


class ProfileMismatch(SilentXaiError):
    pass
