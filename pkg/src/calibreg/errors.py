from typing import Any


class CalibregError(Exception):
    pass


class DimensionMismatchError(CalibregError, ValueError):
    pass


class InvalidArgumentError(CalibregError, ValueError):
    pass


class NonFiniteError(CalibregError, ArithmeticError):
    pass


class MissingLabelsError(CalibregError, ValueError):
    pass


class EmptyLogError(CalibregError, ValueError):
    pass


class UnsupportedKindError(CalibregError, ValueError):
    pass


class DecayOvershootError(CalibregError, ValueError):
    pass


class SchemaMismatchError(CalibregError, ValueError):
    pass


class TrainingDivergedError(CalibregError, ArithmeticError):
    def __init__(self, epoch: int, history: Any = None):
        super().__init__(f"trainer: non-finite loss at epoch {epoch}")
        self.epoch = epoch
        self.history = history

    def __reduce__(self):
        return type(self), (self.epoch, self.history)
