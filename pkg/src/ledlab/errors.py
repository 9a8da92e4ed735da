class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class DataError(ValueError):
    """Missing or malformed dataset / checkpoint on disk."""


class GenerationError(RuntimeError):
    """World generation could not satisfy the requested parameters."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""
