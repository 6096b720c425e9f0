from __future__ import annotations

import datetime
import enum
import math
import pathlib
import typing

import numpy as np
import pydantic

from eo_curator import errors


class Sensor(str, enum.Enum):
    SAR = 'SAR'
    EO = 'EO'


class Stage(str, enum.Enum):
    STAGE1 = 'Stage1'
    STAGE2 = 'Stage2'
    STAGE3 = 'Stage3'
    NONE = 'None'


class Rule(str, enum.Enum):
    QA_CLOUD = 'QACloud'
    PIXEL_THRESHOLD = 'PixelThreshold'
    NIGHT = 'Night'
    NO_DATA = 'NoData'
    FRECHET_SCORE = 'FrechetScore'
    NONE = '-'


class SceneRecord(pydantic.BaseModel):
    """One catalog row: a single SAR or EO acquisition of a grid cell"""

    model_config = pydantic.ConfigDict(frozen=True)

    scene_id: str
    sensor: Sensor
    tile_id: str
    date: datetime.date
    path: pathlib.Path
    bands: tuple[str, ...]
    qa_path: pathlib.Path | None = None

    @pydantic.model_validator(mode='after')
    def _sar_has_no_qa(self) -> SceneRecord:
        if self.sensor == Sensor.SAR and self.qa_path is not None:
            raise ValueError(f'SAR scene {self.scene_id} references a QA band')
        return self


class ImageTile(pydantic.BaseModel):
    """Decoded raster at native bit depth.

    ``pixels`` is stored band-interleaved-by-plane with shape
    ``(bands, height, width)`` and is read-only once constructed.

    """

    model_config = pydantic.ConfigDict(
        arbitrary_types_allowed=True, frozen=True
    )

    pixels: np.ndarray
    bit_depth: typing.Literal[8, 16]
    band_labels: tuple[str, ...]

    @pydantic.field_validator('pixels', mode='before')
    @classmethod
    def _own_view(cls, value: typing.Any) -> np.ndarray:
        # the read-only flag goes on this view, never on the caller's array
        return np.asarray(value).view()

    @pydantic.model_validator(mode='after')
    def _check_buffer(self) -> ImageTile:
        if self.pixels.ndim != 3:
            raise ValueError('pixels must be shaped (bands, height, width)')
        if not np.issubdtype(self.pixels.dtype, np.unsignedinteger):
            raise ValueError(f'unsupported pixel dtype {self.pixels.dtype}')
        if len(self.band_labels) != self.pixels.shape[0]:
            raise ValueError(
                f'{len(self.band_labels)} band labels for '
                f'{self.pixels.shape[0]} bands'
            )
        if self.pixels.size and int(self.pixels.max()) >= 2**self.bit_depth:
            raise ValueError(f'pixel value exceeds {self.bit_depth}-bit range')
        self.pixels.setflags(write=False)
        return self

    @property
    def bands(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[2])

    def band(self, label: str) -> np.ndarray:
        """Return the plane for ``label``."""
        try:
            index = self.band_labels.index(label)
        except ValueError as error:
            raise errors.MissingBand(
                f'Band {label!r} not in {list(self.band_labels)}'
            ) from error
        return self.pixels[index]


class QAMask(pydantic.BaseModel):
    """Per-pixel QA bitfield plus the bit positions that mean cloud"""

    model_config = pydantic.ConfigDict(
        arbitrary_types_allowed=True, frozen=True
    )

    flags: np.ndarray
    cloud_bits: frozenset[int]

    @property
    def height(self) -> int:
        return int(self.flags.shape[0])

    @property
    def width(self) -> int:
        return int(self.flags.shape[1])

    @property
    def cloud_flagged(self) -> np.ndarray:
        mask = 0
        for bit in self.cloud_bits:
            mask |= 1 << bit
        return (self.flags.astype(np.uint64) & np.uint64(mask)) != 0

    @property
    def flagged_count(self) -> int:
        return int(np.count_nonzero(self.cloud_flagged))


class FilterVerdict(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(frozen=True)

    scene_id: str
    kept: bool
    stage: Stage = Stage.NONE
    rule: Rule = Rule.NONE
    statistic: float

    @pydantic.model_validator(mode='after')
    def _check_outcome(self) -> FilterVerdict:
        if self.kept and self.stage != Stage.NONE:
            raise ValueError('kept verdicts carry no stage')
        if not self.kept and (
            self.rule == Rule.NONE or self.stage == Stage.NONE
        ):
            raise ValueError('rejections must name their stage and rule')
        return self

    @classmethod
    def keep(cls, scene_id: str, statistic: float) -> FilterVerdict:
        return cls(scene_id=scene_id, kept=True, statistic=statistic)

    @classmethod
    def reject(
        cls, scene_id: str, stage: Stage, rule: Rule, statistic: float
    ) -> FilterVerdict:
        return cls(
            scene_id=scene_id,
            kept=False,
            stage=stage,
            rule=rule,
            statistic=statistic,
        )


class GaussianStats(pydantic.BaseModel):
    """Sample count, mean vector and unbiased covariance of features"""

    model_config = pydantic.ConfigDict(
        arbitrary_types_allowed=True, frozen=True
    )

    n: int = pydantic.Field(ge=1)
    mean: np.ndarray
    cov: np.ndarray

    @pydantic.model_validator(mode='after')
    def _check_shapes(self) -> GaussianStats:
        d = self.mean.shape[0]
        if self.mean.ndim != 1 or self.cov.shape != (d, d):
            raise ValueError(
                f'mean {self.mean.shape} and cov {self.cov.shape} disagree'
            )
        scale = max(1.0, float(np.max(np.abs(self.cov), initial=0.0)))
        if np.max(np.abs(self.cov - self.cov.T), initial=0.0) > 1e-12 * scale:
            raise ValueError('covariance is not symmetric')
        return self

    @property
    def dimension(self) -> int:
        return int(self.mean.shape[0])


class ScoreSet(pydantic.BaseModel):
    scores: dict[str, float]

    @pydantic.field_validator('scores')
    @classmethod
    def _finite_non_negative(cls, value: dict[str, float]) -> dict[str, float]:
        for scene_id, score in value.items():
            if not math.isfinite(score) or score < 0:
                raise ValueError(f'invalid score {score} for {scene_id}')
        return value

    @property
    def n(self) -> int:
        return len(self.scores)


class ScoreEntry(pydantic.BaseModel):
    scene_id: str
    score: float
    kept: bool
    f_th_literal: float
    f_th_interp: float
    extractor_id: str


class SarComposite(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(
        arbitrary_types_allowed=True, frozen=True
    )

    channels: np.ndarray
    recipe: str

    @pydantic.model_validator(mode='after')
    def _check_planes(self) -> SarComposite:
        if self.channels.ndim != 3 or self.channels.shape[0] != 3:
            raise ValueError('a composite has exactly three planes')
        if not np.all(np.isfinite(self.channels)):
            raise ValueError('composite contains non-finite values')
        return self

    @property
    def height(self) -> int:
        return int(self.channels.shape[1])

    @property
    def width(self) -> int:
        return int(self.channels.shape[2])


class PairRecord(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(frozen=True, populate_by_name=True)

    eo_scene_id: str = pydantic.Field(alias='eo')
    sar_scene_id: str = pydantic.Field(alias='sar')
    tile_id: str = pydantic.Field(alias='tile')
    day_offset: int


class StageCounts(pydantic.BaseModel):
    """EO tallies across the three filtering stages"""

    input: int
    kept: int
    dropped: dict[str, int] = pydantic.Field(default_factory=dict)

    @pydantic.model_validator(mode='after')
    def _reconcile(self) -> StageCounts:
        if self.input != self.kept + sum(self.dropped.values()):
            raise ValueError(
                f'{self.input} inputs != {self.kept} kept + '
                f'{sum(self.dropped.values())} dropped'
            )
        return self


class PairManifest(pydantic.BaseModel):
    config_fingerprint: str
    stage_counts: StageCounts
    pairs: list[PairRecord] = pydantic.Field(default_factory=list)


class StageReport(pydantic.BaseModel):
    stage: str
    input: int
    kept: int
    dropped: dict[str, int] = pydantic.Field(default_factory=dict)
    wall_time: float
    throughput: float

    @pydantic.model_validator(mode='after')
    def _reconcile(self) -> StageReport:
        if self.input != self.kept + sum(self.dropped.values()):
            raise ValueError(f'{self.stage} report counts do not reconcile')
        return self

    @classmethod
    def from_verdicts(
        cls,
        stage: str,
        verdicts: typing.Sequence[FilterVerdict],
        wall_time: float,
    ) -> StageReport:
        dropped: dict[str, int] = {}
        for verdict in verdicts:
            if not verdict.kept:
                dropped[verdict.rule.value] = (
                    dropped.get(verdict.rule.value, 0) + 1
                )
        return cls(
            stage=stage,
            input=len(verdicts),
            kept=sum(1 for v in verdicts if v.kept),
            dropped=dict(sorted(dropped.items())),
            wall_time=wall_time,
            throughput=len(verdicts) / wall_time if wall_time > 0 else 0.0,
        )


class ReferenceDistance(pydantic.BaseModel):
    reference_id: str
    best_output_id: str
    distance: float
    query_key: str | None = None


class EvalReport(pydantic.BaseModel):
    total: float
    per_reference: list[ReferenceDistance]
    mean_mae: float
    sharpness: float
    norm: str = 'meanabs'

    @pydantic.model_validator(mode='after')
    def _check_total(self) -> EvalReport:
        expected = math.fsum(r.distance for r in self.per_reference)
        if abs(self.total - expected) > 1e-9:
            raise ValueError('total does not equal the per-reference sum')
        keys = [(r.query_key, r.reference_id) for r in self.per_reference]
        if len(keys) != len(set(keys)):
            raise ValueError('a reference appears more than once')
        return self


# Stage manifests


class CatalogManifest(pydantic.BaseModel):
    config_fingerprint: str
    records: list[SceneRecord]


class FilterManifest(pydantic.BaseModel):
    config_fingerprint: str
    verdicts: list[FilterVerdict]


class ScoreManifest(pydantic.BaseModel):
    config_fingerprint: str
    extractor_id: str
    threshold_form: str
    beta: float
    reference_count: int
    f_th_literal: float | None = None
    f_th_interp: float | None = None
    verdicts: list[FilterVerdict]


class FileChecksum(pydantic.BaseModel):
    scene_id: str
    path: str
    sha256: str


class PrepOutput(pydantic.BaseModel):
    scene_id: str
    sensor: Sensor
    tiff: str
    png: str
    sha256: str


class PrepManifest(pydantic.BaseModel):
    config_fingerprint: str
    outputs: list[PrepOutput]


class BridgeLog(pydantic.BaseModel):
    config_fingerprint: str
    command: list[str]
    returncode: int
    output: str
    inputs: list[FileChecksum]
    outputs: list[FileChecksum]
    mapping: str | None = None
