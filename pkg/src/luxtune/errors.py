"""Exception hierarchy shared across the package.

Every error carries a process exit code so the CLI can map failures to
distinct, documented statuses.
"""


class LuxtuneError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ShapeError(LuxtuneError, ValueError):
    """Tensor or image dimensions are inconsistent with an operation."""

    exit_code = 4


class KnobRangeError(LuxtuneError, ValueError):
    """A tuning knob is outside its legal range."""

    exit_code = 4

    def __init__(self, message: str, lo: float, hi: float):
        super().__init__(message)
        self.lo = lo
        self.hi = hi


class GradientError(LuxtuneError, RuntimeError):
    """Backward pass was requested for state that was never recorded."""

    exit_code = 4


class FormatError(LuxtuneError, ValueError):
    """A binary or manifest file does not match its declared format."""

    exit_code = 6


class AssetError(LuxtuneError, FileNotFoundError):
    """A referenced dataset, checkpoint or image does not exist."""

    exit_code = 3


class TrainingDiverged(LuxtuneError, RuntimeError):
    """Loss became non-finite during training."""

    exit_code = 5

    def __init__(self, epoch: int, detail: str = ""):
        msg = f"training diverged at epoch {epoch}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.epoch = epoch
