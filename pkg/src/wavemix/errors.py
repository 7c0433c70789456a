"""Exception hierarchy shared by all wavemix modules."""


class WavemixError(Exception):
    """Base class for library errors."""


class LengthError(WavemixError, ValueError):
    """Signal length is not a power of two (or lengths disagree)."""


class StructureError(WavemixError, ValueError):
    """A coefficient tree, variance field or threshold field is malformed."""


class ConfigurationError(WavemixError, ValueError):
    """Invalid parameter combination (bad rule name, scad_a <= 2, ...)."""


class DomainError(WavemixError, ValueError):
    """A numeric argument lies outside its admissible range."""


class InsufficientReplicatesError(WavemixError, ValueError):
    """Heteroscedastic variance estimation needs at least two replicates."""


class CalibrationError(WavemixError, ValueError):
    """Noise model cannot be calibrated for the requested configuration."""


class CellError(WavemixError, RuntimeError):
    """A study cell failed; ``cell`` names it and ``__cause__`` holds the original error."""

    def __init__(self, cell: str, cause: BaseException):
        super().__init__(f"study cell {cell} failed: {type(cause).__name__}: {cause}")
        self.cell = cell
        self.cause = cause
