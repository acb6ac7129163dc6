"""Exception types raised across the package."""


class ConfigError(ValueError):
    """Invalid solver or problem configuration.

    When the violation concerns a convergence assumption, ``label`` holds its
    tag, e.g. ``"A1"``.
    """

    def __init__(self, message, label=None):
        if label is not None:
            message = f"({label}) {message}"
        super().__init__(message)
        self.label = label


class DimensionError(ValueError):
    """Array shapes are inconsistent."""


class UnsupportedOperatorError(ConfigError):
    """No closed-form inversion is available for the given operator."""


class NumericalError(FloatingPointError):
    """An iterate became non-finite."""

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration
