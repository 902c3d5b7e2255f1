"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid scenario, watermark or noise configuration."""


class NotReadyError(RuntimeError):
    """Raised when a statistic is requested before enough samples exist."""
