class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class NonFiniteError(ValueError):
    """NaN or Inf found where finite values are required."""


class ConfigError(ValueError):
    """Invalid user-supplied configuration."""


class LabelError(ValueError):
    """Class label outside the valid range."""


class FormatError(ValueError):
    """Malformed input file."""


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, message: str = "loss became non-finite"):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch
