"""Exception types raised across the package."""


class SecureQMLError(Exception):
    """Base class for all package errors."""


class CircuitError(SecureQMLError, ValueError):
    """Invalid gate or circuit, or incompatible composition."""


class ParseError(SecureQMLError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SimulationError(SecureQMLError, ValueError):
    pass


class ResourceError(SecureQMLError):
    pass


class DataFormatError(SecureQMLError, ValueError):
    pass


class PassError(SecureQMLError):
    """A compiler pass could not be applied to its input."""


class DecompositionError(SecureQMLError, ValueError):
    pass


class MetricError(SecureQMLError, ValueError):
    pass


class ConfigurationError(SecureQMLError, ValueError):
    pass


class ScenarioError(SecureQMLError):
    pass
