"""Pipeline configuration.

The configuration file is TOML: ``key = value`` lines grouped under
``[section]`` headers. Every section is a pydantic model that forbids
unknown keys, so a misspelled threshold fails loudly instead of quietly
falling back to its default.

"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import pathlib
import tomllib
import typing

import pydantic

from eo_curator import errors

LOGGER = logging.getLogger(__name__)

RGB8_SCALE = 10000 / 255


class Section(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra='forbid', frozen=True)


class PathsConfig(Section):
    catalog: pathlib.Path | None = None
    cloud_subset: pathlib.Path | None = None
    external_features: pathlib.Path | None = None
    external_index: pathlib.Path | None = None


class QAConfig(Section):
    cloud_bits: frozenset[int] = frozenset({10, 11})

    @pydantic.field_validator('cloud_bits')
    @classmethod
    def _bits_fit_u16(cls, value: frozenset[int]) -> frozenset[int]:
        if any(bit < 0 or bit > 15 for bit in value):
            raise ValueError('QA bit positions must be within 0-15')
        return value

    @pydantic.field_serializer('cloud_bits')
    def _sorted_bits(self, value: frozenset[int]) -> list[int]:
        return sorted(value)


class Stage1Config(Section):
    alpha: int = pydantic.Field(default=4096, ge=0, lt=2**16)
    bright_pixel_ratio: float = pydantic.Field(default=0.01, ge=0, le=1)
    qa_cloud_ratio: float = pydantic.Field(default=0.0, ge=0, le=1)


class Stage2Config(Section):
    brightness_threshold: float = pydantic.Field(default=30, ge=0, le=255)
    nodata_value_threshold: float = pydantic.Field(default=10, ge=0, le=255)
    nodata_ratio: float = pydantic.Field(default=0.10, ge=0, le=1)


class RgbConfig(Section):
    bands: tuple[str, str, str] = ('B4', 'B3', 'B2')
    scale: float = pydantic.Field(default=RGB8_SCALE, gt=0)


class ThresholdForm(str, enum.Enum):
    LITERAL_EQ1 = 'LiteralEq1'
    INTERPOLATION = 'Interpolation'


class Extractor(str, enum.Enum):
    HANDCRAFTED = 'Handcrafted'
    EXTERNAL_FEATURES = 'ExternalFeatures'


class Stage3Config(Section):
    beta: float = pydantic.Field(default=0.4, ge=0, le=1)
    threshold_form: ThresholdForm = ThresholdForm.LITERAL_EQ1
    patch_size: int = pydantic.Field(default=64, ge=8)
    extractor: Extractor = Extractor.HANDCRAFTED
    epsilon_reg: float = pydantic.Field(default=1e-6, ge=0)


class Recipe(str, enum.Enum):
    VV_VH_AVG = 'VV_VH_Avg'
    CUSTOM = 'Custom'


class SarConfig(Section):
    bands: tuple[str, str] = ('VV', 'VH')
    recipe: Recipe = Recipe.VV_VH_AVG
    custom_expr: str | None = None
    median_k: int = pydantic.Field(default=3, ge=3)
    db_input: bool = False

    @pydantic.model_validator(mode='after')
    def _check_recipe(self) -> SarConfig:
        if self.median_k % 2 == 0:
            raise ValueError('median_k must be odd')
        if self.recipe == Recipe.CUSTOM and not self.custom_expr:
            raise ValueError('the Custom recipe requires custom_expr')
        return self


class NormVariant(str, enum.Enum):
    DATASET1_MINMAX = 'Dataset1MinMax'
    DATASET2_TANH = 'Dataset2Tanh'


class MinMaxMode(str, enum.Enum):
    PER_IMAGE = 'PerImage'
    GLOBAL_FROM_CONFIG = 'GlobalFromConfig'


class NormalizationSpec(Section):
    variant: NormVariant = NormVariant.DATASET1_MINMAX
    tanh_scale: float = pydantic.Field(default=1.0, gt=0)
    minmax_mode: MinMaxMode = MinMaxMode.PER_IMAGE
    global_min: float | None = None
    global_max: float | None = None

    @pydantic.model_validator(mode='after')
    def _check_global_range(self) -> NormalizationSpec:
        if self.minmax_mode == MinMaxMode.GLOBAL_FROM_CONFIG and (
            self.global_min is None
            or self.global_max is None
            or self.global_min >= self.global_max
        ):
            raise ValueError('GlobalFromConfig requires global_min < max')
        return self


class PairConfig(Section):
    window_days: int = pydantic.Field(default=30, ge=0)
    max_pairs_per_eo: int | None = pydantic.Field(default=None, ge=1)


class InputFormat(str, enum.Enum):
    TIFF = 'tiff'
    PNG = 'png'


class BridgeConfig(Section):
    command: str | None = None
    input_format: InputFormat = InputFormat.TIFF
    timeout: float | None = pydantic.Field(default=None, gt=0)

    @pydantic.field_validator('command')
    @classmethod
    def _has_placeholders(cls, value: str | None) -> str | None:
        if value is not None and (
            '{in_dir}' not in value or '{out_dir}' not in value
        ):
            raise ValueError('command needs {in_dir} and {out_dir}')
        return value


class DistanceNorm(str, enum.Enum):
    MEAN_ABS = 'meanabs'
    MEAN_SQ = 'meansq'


class EvalConfig(Section):
    norm: DistanceNorm = DistanceNorm.MEAN_ABS
    mapping: pathlib.Path | None = None
    outputs: pathlib.Path | None = None
    references: pathlib.Path | None = None


class RunConfig(Section):
    workers: int = pydantic.Field(default=1, ge=1)
    out: pathlib.Path = pathlib.Path('out')


class PipelineConfig(Section):
    paths: PathsConfig = PathsConfig()
    qa: QAConfig = QAConfig()
    stage1: Stage1Config = Stage1Config()
    stage2: Stage2Config = Stage2Config()
    rgb: RgbConfig = RgbConfig()
    stage3: Stage3Config = Stage3Config()
    sar: SarConfig = SarConfig()
    norm: NormalizationSpec = NormalizationSpec()
    pair: PairConfig = PairConfig()
    bridge: BridgeConfig = BridgeConfig()
    eval: EvalConfig = EvalConfig()
    run: RunConfig = RunConfig()

    @property
    def fingerprint(self) -> str:
        """SHA-256 over every section that can change a result"""
        payload = self.model_dump(mode='json', exclude={'run'})
        canonical = json.dumps(payload, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    def with_run(self, **overrides: typing.Any) -> PipelineConfig:
        """Return a copy with ``[run]`` values replaced (CLI overrides)."""
        values = {k: v for k, v in overrides.items() if v is not None}
        if not values:
            return self
        return self.replace_section('run', **values)

    def replace_section(
        self, name: str, **values: typing.Any
    ) -> PipelineConfig:
        """Return a copy with keys of one section replaced and revalidated.

        Raises:
            ConfigError: a replaced value is out of range.

        """
        section = getattr(self, name)
        try:
            updated = type(section).model_validate(
                {**section.model_dump(), **values}
            )
        except pydantic.ValidationError as error:
            raise errors.ConfigError(
                f'Invalid [{name}] override: {_describe(error)}'
            ) from error
        return self.model_copy(update={name: updated})


def load(path: pathlib.Path | None) -> PipelineConfig:
    """Load and validate a configuration file.

    Relative paths in ``[paths]``, ``[eval]`` and ``[run]`` resolve against
    the directory holding the file. Without a file every default applies.

    Raises:
        ConfigError: unreadable file, TOML syntax error, unknown key or
            out-of-range value.

    """
    if path is None:
        return PipelineConfig()
    try:
        with path.open('rb') as handle:
            raw = tomllib.load(handle)
    except OSError as error:
        raise errors.ConfigError(f'Cannot read {path}: {error}') from error
    except tomllib.TOMLDecodeError as error:
        raise errors.ConfigError(f'{path}: {error}') from error
    return from_mapping(raw, path.parent)


def from_mapping(
    raw: dict[str, typing.Any], base: pathlib.Path | None = None
) -> PipelineConfig:
    try:
        config = PipelineConfig.model_validate(raw)
    except pydantic.ValidationError as error:
        raise errors.ConfigError(
            f'Invalid configuration: {_describe(error)}'
        ) from error
    if base is not None:
        config = _resolve_paths(config, base)
    LOGGER.debug('Configuration fingerprint %s', config.fingerprint)
    return config


def _resolve_paths(
    config: PipelineConfig, base: pathlib.Path
) -> PipelineConfig:
    def resolve(section: Section) -> Section:
        updates = {
            name: base / value
            for name, value in section
            if isinstance(value, pathlib.Path) and not value.is_absolute()
        }
        return section.model_copy(update=updates) if updates else section

    return config.model_copy(
        update={
            'paths': resolve(config.paths),
            'eval': resolve(config.eval),
            'run': resolve(config.run),
        }
    )


def _describe(error: pydantic.ValidationError) -> str:
    return '; '.join(
        f'{".".join(str(p) for p in e["loc"])}: {e["msg"]}'
        for e in error.errors()
    )
