"""Exception hierarchy.

Errors are grouped by the CLI exit code they map to: configuration problems
(2), data problems (3) and training failures (4).
"""


class IGTError(Exception):
    exit_code = 1


class ConfigError(IGTError):
    exit_code = 2


class DataError(IGTError):
    exit_code = 3


class TrainingError(IGTError):
    exit_code = 4


# ingest
class EmptyInput(DataError):
    pass


class MissingColumn(DataError):
    pass


# features
class CatalogMismatch(ConfigError):
    pass


class EmptyTrainingSet(DataError):
    pass


class TooFewInstances(DataError):
    pass


# imaging / selection
class DegenerateTransformSet(ConfigError):
    pass


class InsufficientData(DataError):
    pass


# model
class UnsupportedSide(ConfigError):
    pass


class ShapeMismatch(TrainingError):
    pass


# scoring
class EmptyTrainSet(DataError):
    pass


class DegenerateSamples(TrainingError):
    pass


class MismatchedK(TrainingError):
    pass


class EmptyScores(DataError):
    pass


class EmptyWindow(DataError):
    pass


# eval
class LengthMismatch(DataError):
    pass


class SingleClass(DataError):
    pass


class MissingLabels(DataError):
    pass


# cli
class InvalidPlan(ConfigError):
    pass


class NoScores(DataError):
    pass


class StageError(IGTError):
    """A module error annotated with the pipeline stage (and user) it came from."""

    def __init__(self, stage, cause, user=None):
        self.stage = stage
        self.user = user
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
        where = stage if user is None else f"{stage}[{user}]"
        super().__init__(f"{where}: {type(cause).__name__}: {cause}")
