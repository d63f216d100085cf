"""Exception types shared across the package."""


class DataError(Exception):
    """A file or dataset violates its expected format or contract."""


class ModelFileError(DataError):
    """A model/cache/feature container is missing, truncated, or inconsistent."""
