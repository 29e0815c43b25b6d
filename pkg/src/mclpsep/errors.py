class ConfigError(ValueError):
    """Invalid configuration or input shape."""


class NumericalError(FloatingPointError):
    """A solver produced non-finite values."""

    def __init__(self, message, iteration=None, bin=None, reference=None):
        super().__init__(message)
        self.iteration = iteration
        self.bin = bin
        self.reference = reference
