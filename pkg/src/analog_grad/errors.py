"""Exception types shared across the package."""


class AnalogGradError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(AnalogGradError, ValueError):
    """Invalid configuration value or document (CLI exit code 2)."""


class ShapeError(AnalogGradError, ValueError):
    """Tensor shapes incompatible with an operation."""


class GraphError(AnalogGradError, RuntimeError):
    """Computation-graph misuse (unbound leaf, backward before forward, ...)."""
