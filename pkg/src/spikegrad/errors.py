class ConfigError(ValueError):
    """Invalid configuration or shape mismatch."""


class ParseError(ValueError):
    """Malformed dataset file."""


class DivergenceError(RuntimeError):
    """Non-finite loss or gradient during training."""
