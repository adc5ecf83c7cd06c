"""Exception types shared across the package."""


class ValidationError(ValueError):
    """An input violates a model invariant.

    ``field`` names the offending entry (dotted path, list cells in brackets),
    so config loaders can point users at the exact cell.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")

    def prefixed(self, prefix: str) -> "ValidationError":
        return type(self)(f"{prefix}.{self.field}" if prefix else self.field, self.message)


class FilterStepError(RuntimeError):
    """The filter integrator produced a negative mass (step too large)."""
