"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class CrashprintError(Exception):
    exit_code = 1


class InvalidInputError(CrashprintError, ValueError):
    exit_code = 2


class ThresholdTooStrictError(InvalidInputError):
    """Vocabulary filtering removed every metric."""


class UndefinedMetricError(InvalidInputError):
    """A cluster validity index is undefined for the given labelling (e.g. one cluster)."""


class ModelMismatchError(InvalidInputError):
    """Tensors and model were built against different vocabularies or configs."""


class InvalidStateError(CrashprintError, RuntimeError):
    exit_code = 3


class TrainingDivergedError(CrashprintError, ArithmeticError):
    exit_code = 4

    def __init__(self, message, epoch=None):
        if epoch is not None:
            message = f"{message} (epoch {epoch})"
        super().__init__(message)
        self.epoch = epoch
