"""Exception hierarchy. ``exit_code`` is what the CLI returns for each family."""


class SpliceGanError(Exception):
    exit_code = 2


class ConfigError(SpliceGanError):
    exit_code = 2


class MissingArtifact(SpliceGanError):
    exit_code = 4


class NumericFailure(SpliceGanError):
    exit_code = 3


# dataset_forge
class OutOfBounds(SpliceGanError, ValueError):
    pass


class EmptySprite(SpliceGanError, ValueError):
    pass


class InsufficientBases(SpliceGanError, ValueError):
    pass


class QuotaUnsatisfiable(SpliceGanError, ValueError):
    pass


# models / losses
class BadShape(SpliceGanError, ValueError):
    pass


class ShapeMismatch(SpliceGanError, ValueError):
    pass


class BadCheckpoint(MissingArtifact):
    pass


# training
class NonFiniteLoss(NumericFailure):
    pass


class EmptyList(SpliceGanError, ValueError):
    pass


# evaluation
class DegenerateLabels(SpliceGanError, ValueError):
    pass


class NoPositives(DegenerateLabels):
    pass


class NoDetectedForgeries(SpliceGanError, ValueError):
    pass
