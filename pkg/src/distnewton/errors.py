class ConfigurationError(ValueError):
    """Inconsistent shapes, splits or hyperparameters."""


class InvalidSplitError(ConfigurationError):
    pass


class CollectiveError(RuntimeError):
    """A collective could not complete, e.g. a peer timed out."""

    def __init__(self, message, worker=None):
        super().__init__(message)
        self.worker = worker


class NumericalError(ArithmeticError):
    pass


class DirectionError(ValueError):
    """Line search was handed a direction that is not a descent direction."""


class ParseError(ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TrainingError(RuntimeError):
    def __init__(self, message, iteration=None, worker=None):
        super().__init__(message)
        self.iteration = iteration
        self.worker = worker


class LabelError(ValueError):
    """A label outside the known label set."""


class StratificationError(ValueError):
    pass
