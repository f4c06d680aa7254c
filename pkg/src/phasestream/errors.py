"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration value is structurally invalid (bad kernel size, rate, ...)."""


class ShapeError(ValueError):
    """Runtime input rejected because its shape violates an operation's contract."""


class IngestionError(RuntimeError):
    """A frame directory or file could not be read into a clip."""

    def __init__(self, message, path=None):
        if path is not None:
            message = f"{message} ({path})"
        super().__init__(message)
        self.path = path


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the iteration and first offending layer."""

    def __init__(self, iteration, layer_name):
        super().__init__(
            f"non-finite loss at iteration {iteration} (first bad layer: {layer_name})"
        )
        self.iteration = iteration
        self.layer_name = layer_name
