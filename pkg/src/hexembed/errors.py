"""Exceptions shared across the pipeline (mapped to CLI exit codes)."""


class DataError(Exception):
    """Invalid or missing input data (CLI exit code 3)."""


class StalenessError(Exception):
    """An upstream artifact changed since its stage ran (CLI exit code 4)."""
