"""Exception types shared across the package."""


class DataError(ValueError):
    """Malformed input data, invalid configuration, or a bad model file."""


class ModelFormatError(DataError):
    """A saved model file cannot be parsed or carries an unknown version."""


class NumericalError(RuntimeError):
    """A linear solve failed or the training risk degenerated."""
