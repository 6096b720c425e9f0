"""Exceptions raised by eo-curator.

Every exception carries the process exit code the command line returns
when it escapes a subcommand.

"""


class CuratorError(Exception):
    """Base class for all eo-curator errors"""

    exit_code = 1


class ConfigError(CuratorError):
    """The pipeline configuration is invalid"""

    exit_code = 2


class DataError(CuratorError, ValueError):
    """Input data violates a documented precondition"""

    exit_code = 3


class ExternalCommandError(CuratorError):
    """An external model command misbehaved"""

    exit_code = 4


# catalog-ingest


class MalformedCatalog(DataError):
    pass


class DuplicateSceneId(DataError):
    pass


class DecodeError(DataError):
    pass


class BandCountMismatch(DataError):
    pass


class NotSingleBand(DataError):
    pass


class UnknownScene(DataError):
    pass


# shape checks shared by several modules


class DimensionMismatch(DataError):
    pass


class MissingBand(DataError):
    pass


class WrongBandLayout(DataError):
    pass


# scoring


class PatchTooLarge(DataError):
    pass


class PatchTooSmall(DataError):
    pass


class EmptyStream(DataError):
    pass


class NotSymmetric(DataError):
    pass


class NotFiniteInput(DataError):
    pass


class EmptyScoreSet(DataError):
    pass


class MalformedFeatureFile(DataError):
    pass


# sar-prep


class NonFinite(DataError):
    pass


class EvenKernel(DataError):
    pass


class PlaneTooSmall(DataError):
    pass


class DegeneratePlane(DataError):
    pass


# pairing


class NegativeWindow(DataError):
    pass


class SensorMismatch(DataError):
    pass


# eval-metric


class OutOfRange(DataError):
    pass


class EmptySet(DataError):
    pass


# pipeline


class MissingUpstreamManifest(DataError):
    pass


class StageFailure(DataError):
    """A module error raised while processing one scene"""

    def __init__(self, stage: str, scene_id: str, reason: str) -> None:
        super().__init__(f'{stage} failed on {scene_id}: {reason}')
        self.stage = stage
        self.scene_id = scene_id
        self.reason = reason

    def __reduce__(self) -> tuple[type, tuple[str, str, str]]:
        return type(self), (self.stage, self.scene_id, self.reason)


class CommandFailed(ExternalCommandError):
    def __init__(self, returncode: int, output: str) -> None:
        super().__init__(
            f'External command exited with {returncode}: {output.strip()}'
        )
        self.returncode = returncode
        self.output = output

    def __reduce__(self) -> tuple[type, tuple[int, str]]:
        return type(self), (self.returncode, self.output)


class IncompleteOutputs(ExternalCommandError):
    def __init__(self, missing: list[str]) -> None:
        super().__init__(f'Missing outputs for: {", ".join(missing)}')
        self.missing = missing

    def __reduce__(self) -> tuple[type, tuple[list[str]]]:
        return type(self), (self.missing,)
