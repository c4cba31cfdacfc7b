"""Common exception base for all audit failures."""


class AuditError(Exception):
    """Base class for every error raised by this toolkit."""
