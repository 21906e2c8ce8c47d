class QdrtError(Exception):
    """Base class for every failure raised by the simulator."""


class SceneParseError(QdrtError):
    """The scene document does not follow the schema. `field` names the offending key."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class SceneValidationError(QdrtError):
    """The scene parsed but breaks a physical constraint."""

    def __init__(self, constraint: str, message: str | None = None):
        self.constraint = constraint
        super().__init__(message or constraint)


class GeometryError(QdrtError):
    pass


class PlacementError(QdrtError):
    pass


class SampleSizeError(QdrtError):
    def __init__(self, got: int, minimum: int, what: str = "samples"):
        self.got = got
        self.minimum = minimum
        super().__init__(f"need at least {minimum} {what}, got {got}")


class FitError(QdrtError):
    """Input cannot be fitted (non-positive values, zero spread, ...)."""


class FitConvergenceError(FitError):
    def __init__(self, family: str, iterations: int, last_iterate: dict):
        self.family = family
        self.iterations = iterations
        self.last_iterate = last_iterate
        super().__init__(f"{family} MLE did not converge in {iterations} iterations (last iterate {last_iterate})")


class SeedError(QdrtError):
    """A master seed or substream index is negative."""
