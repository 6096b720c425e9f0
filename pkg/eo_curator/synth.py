"""Deterministic synthetic corpus with ground-truth filter labels.

Every EO scene belongs to one class whose pixel statistics sit well clear
of the default filter thresholds, so the expected verdict is known ahead
of time:

========== ====================== ===========================================
Class      Expected verdict       Construction
========== ====================== ===========================================
clean      kept                   textured land cover, 8-bit values 20-95
cloud      Stage1 PixelThreshold  bright block (raw 5000-9000) over 30-60%
qa_cloud   Stage1 QACloud         clean pixels, QA60 cloud bits over 5-20%
night      Stage2 Night           value channel at most 25
nodata     Stage2 NoData          clean pixels with 20-35% zeroed
haze       Stage3 FrechetScore    thin uniform cloud, 8-bit values 74-86
reference  Stage3 FrechetScore    haze scenes listed in ``cloud_subset.txt``
========== ====================== ===========================================

The generator uses numpy's PCG64 bit generator; the algorithm name and
seed are recorded in ``labels.json``.

"""

from __future__ import annotations

import datetime
import logging
import pathlib
import tomllib
import typing

import numpy as np
import pydantic
import scipy.ndimage

from eo_curator import catalog, config, errors, models

LOGGER = logging.getLogger(__name__)

PRNG = 'PCG64'
EO_BANDS = ('B2', 'B3', 'B4', 'B8')
SAR_BANDS = ('VV', 'VH')
CLASSES = (
    'clean',
    'cloud',
    'qa_cloud',
    'night',
    'nodata',
    'haze',
    'reference',
)
EXPECTED = {
    'clean': (models.Stage.NONE, models.Rule.NONE),
    'cloud': (models.Stage.STAGE1, models.Rule.PIXEL_THRESHOLD),
    'qa_cloud': (models.Stage.STAGE1, models.Rule.QA_CLOUD),
    'night': (models.Stage.STAGE2, models.Rule.NIGHT),
    'nodata': (models.Stage.STAGE2, models.Rule.NO_DATA),
    'haze': (models.Stage.STAGE3, models.Rule.FRECHET_SCORE),
    'reference': (models.Stage.STAGE3, models.Rule.FRECHET_SCORE),
}

# 8-bit (R, G, B) levels of the clean class
CLEAN_BASE = np.array([50, 68, 44])
CLEAN_JITTER = 2
CLEAN_RANGE = (20, 95)
HAZE_BASE = 80
HAZE_RANGE = (74, 86)
QA_CLOUD_FLAGS = (1 << 10, 1 << 11)
EPOCH = datetime.date(2020, 1, 1)

# Guard margin between generated statistics and default thresholds
MARGIN = 0.10


class SynthSpec(pydantic.BaseModel):
    """Generator parameters; defaults yield a 20-scene EO corpus."""

    model_config = pydantic.ConfigDict(extra='forbid', frozen=True)

    seed: int = pydantic.Field(default=7, ge=0, lt=2**64)
    size: int = pydantic.Field(default=64, ge=32)
    patch_size: int = pydantic.Field(default=16, ge=8)
    tiles: int = pydantic.Field(default=4, ge=1)
    sar_per_tile: int = pydantic.Field(default=3, ge=0)
    days: int = pydantic.Field(default=90, ge=1)
    clean: int = pydantic.Field(default=6, ge=1)
    cloud: int = pydantic.Field(default=2, ge=0)
    qa_cloud: int = pydantic.Field(default=2, ge=0)
    night: int = pydantic.Field(default=2, ge=0)
    nodata: int = pydantic.Field(default=2, ge=0)
    haze: int = pydantic.Field(default=3, ge=0)
    reference: int = pydantic.Field(default=3, ge=1)
    cloud_brightness: tuple[int, int] = (5000, 9000)
    cloud_fraction: tuple[float, float] = (0.30, 0.60)
    qa_fraction: tuple[float, float] = (0.05, 0.20)
    night_max_value: int = pydantic.Field(default=25, ge=0)
    nodata_fraction: tuple[float, float] = (0.20, 0.35)

    @pydantic.model_validator(mode='after')
    def _clear_of_thresholds(self) -> SynthSpec:
        defaults = config.PipelineConfig()
        ranges = {
            'cloud_brightness': self.cloud_brightness,
            'cloud_fraction': self.cloud_fraction,
            'qa_fraction': self.qa_fraction,
            'nodata_fraction': self.nodata_fraction,
        }
        for name, (low, high) in ranges.items():
            if low > high:
                raise ValueError(f'{name} range is reversed')
        if self.patch_size > self.size:
            raise ValueError('patch_size exceeds the tile size')
        if self.cloud_brightness[0] < defaults.stage1.alpha * (1 + MARGIN):
            raise ValueError('cloud_brightness too close to stage1.alpha')
        if self.cloud_brightness[1] >= 2**16:
            raise ValueError('cloud_brightness exceeds 16 bits')
        if self.cloud_fraction[0] < defaults.stage1.bright_pixel_ratio * (
            1 + MARGIN
        ):
            raise ValueError('cloud_fraction too close to the pixel ratio')
        if self.cloud_fraction[1] > 1 or self.qa_fraction[1] > 1:
            raise ValueError('fractions must not exceed 1')
        if self.qa_fraction[0] <= 0:
            raise ValueError('qa_fraction must be positive')
        if self.night_max_value > defaults.stage2.brightness_threshold * (
            1 - MARGIN
        ):
            raise ValueError('night_max_value too close to the threshold')
        if self.nodata_fraction[0] < defaults.stage2.nodata_ratio * (
            1 + MARGIN
        ):
            raise ValueError('nodata_fraction too close to nodata_ratio')
        if self.nodata_fraction[1] > 0.4:
            raise ValueError('nodata_fraction above 0.4 darkens to night')
        return self

    def counts(self) -> dict[str, int]:
        return {name: getattr(self, name) for name in CLASSES}


class GroundTruth(pydantic.BaseModel):
    scene_id: str
    expected_stage: models.Stage
    expected_rule: models.Rule


class LabelFile(pydantic.BaseModel):
    prng: str
    seed: int
    labels: list[GroundTruth]

    def by_scene(self) -> dict[str, GroundTruth]:
        return {label.scene_id: label for label in self.labels}


def load_spec(path: pathlib.Path | None, **overrides: typing.Any) -> SynthSpec:
    """Read a generator spec from TOML; keyword overrides win."""
    raw: dict[str, typing.Any] = {}
    if path is not None:
        try:
            with path.open('rb') as handle:
                raw = tomllib.load(handle)
        except (OSError, tomllib.TOMLDecodeError) as error:
            raise errors.ConfigError(f'{path}: {error}') from error
    raw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return SynthSpec.model_validate(raw)
    except pydantic.ValidationError as error:
        raise errors.ConfigError(f'Invalid synth spec: {error}') from error


def generate(spec: SynthSpec, out_dir: pathlib.Path) -> LabelFile:
    """Write a labelled corpus into ``out_dir``.

    Produces ``catalog.csv``, ``eo/``, ``qa/`` and ``sar/`` rasters,
    ``cloud_subset.txt``, ``labels.json`` and a ``pipeline.toml`` pointing
    at them. Identical specs give byte-identical directories.

    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    out_dir.mkdir(parents=True, exist_ok=True)
    classes = [
        name for name, count in spec.counts().items() for _ in range(count)
    ]
    order = rng.permutation(len(classes))
    records: list[models.SceneRecord] = []
    labels: list[GroundTruth] = []
    references: list[str] = []
    for number, index in enumerate(order, start=1):
        kind = classes[index]
        scene_id = f'S2_{number:05d}'
        raw, qa = _eo_scene(kind, rng, spec)
        path = out_dir / 'eo' / f'{scene_id}.tif'
        qa_path = out_dir / 'qa' / f'{scene_id}.tif'
        catalog.write_tile(path, raw, compress='deflate')
        catalog.write_tile(qa_path, qa, compress='deflate')
        records.append(
            models.SceneRecord(
                scene_id=scene_id,
                sensor=models.Sensor.EO,
                tile_id=f'T{(number - 1) % spec.tiles + 1:03d}',
                date=_date(rng, spec.days),
                path=path,
                bands=EO_BANDS,
                qa_path=qa_path,
            )
        )
        stage, rule = EXPECTED[kind]
        labels.append(
            GroundTruth(
                scene_id=scene_id, expected_stage=stage, expected_rule=rule
            )
        )
        if kind == 'reference':
            references.append(scene_id)

    number = 0
    for tile in range(1, spec.tiles + 1):
        for _ in range(spec.sar_per_tile):
            number += 1
            scene_id = f'S1_{number:05d}'
            path = out_dir / 'sar' / f'{scene_id}.tif'
            catalog.write_tile(
                path, _sar_scene(rng, spec.size), compress='deflate'
            )
            records.append(
                models.SceneRecord(
                    scene_id=scene_id,
                    sensor=models.Sensor.SAR,
                    tile_id=f'T{tile:03d}',
                    date=_date(rng, spec.days),
                    path=path,
                    bands=SAR_BANDS,
                )
            )

    catalog.write_catalog(out_dir / 'catalog.csv', records)
    (out_dir / 'cloud_subset.txt').write_text(
        ''.join(f'{scene_id}\n' for scene_id in sorted(references)),
        encoding='utf-8',
    )
    label_file = LabelFile(
        prng=PRNG,
        seed=spec.seed,
        labels=sorted(labels, key=lambda label: label.scene_id),
    )
    (out_dir / 'labels.json').write_text(
        label_file.model_dump_json(indent=2), encoding='utf-8'
    )
    (out_dir / 'pipeline.toml').write_text(
        _PIPELINE_TOML.format(patch_size=spec.patch_size), encoding='utf-8'
    )
    LOGGER.info(
        'Generated %i EO and %i SAR scenes in %s (seed %i)',
        len(labels),
        number,
        out_dir,
        spec.seed,
    )
    return label_file


_PIPELINE_TOML = """\
[paths]
catalog = "catalog.csv"
cloud_subset = "cloud_subset.txt"

[stage3]
patch_size = {patch_size}

[run]
out = "out"
"""


def _date(rng: np.random.Generator, days: int) -> datetime.date:
    return EPOCH + datetime.timedelta(days=int(rng.integers(0, days)))


def _field(
    rng: np.random.Generator, size: int, amplitude: float
) -> np.ndarray:
    """Smooth zero-mean texture with standard deviation ``amplitude``."""
    noise = rng.standard_normal((size, size))
    smooth = scipy.ndimage.gaussian_filter(noise, sigma=size / 16, mode='wrap')
    return typing.cast(
        np.ndarray, smooth / max(float(smooth.std()), 1e-12) * amplitude
    )


def _rgb8(
    rng: np.random.Generator,
    size: int,
    bases: np.ndarray,
    amplitude: float,
    noise: float,
    value_range: tuple[int, int],
) -> np.ndarray:
    texture = _field(rng, size, amplitude)
    planes = np.stack(
        [
            base + texture + rng.normal(0.0, noise, (size, size))
            for base in bases
        ]
    )
    return np.clip(planes, *value_range)


def _to_raw(rgb8: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Raw reflectance that renders to within one level of ``rgb8``."""
    raw = rgb8 * config.RGB8_SCALE + rng.uniform(0.0, 30.0, rgb8.shape)
    return np.rint(raw)


def _stack(rgb_raw: np.ndarray, nir: np.ndarray) -> np.ndarray:
    # file band order is B2, B3, B4, B8: blue, green, red, near infrared
    red, green, blue = rgb_raw
    return np.stack([blue, green, red, nir]).astype(np.uint16)


def _rows(
    rng: np.random.Generator, size: int, fraction_range: tuple[float, float]
) -> slice:
    """A band of full-width rows covering a fraction of the tile."""
    fraction = rng.uniform(*fraction_range)
    height = min(size, max(1, round(fraction * size)))
    start = int(rng.integers(0, size - height + 1))
    return slice(start, start + height)


def _clean(rng: np.random.Generator, size: int) -> np.ndarray:
    bases = CLEAN_BASE + rng.integers(-CLEAN_JITTER, CLEAN_JITTER + 1, 3)
    rgb8 = _rgb8(rng, size, bases, 6.0, 3.0, CLEAN_RANGE)
    nir = rng.uniform(2500, 3400, (size, size))
    return _stack(_to_raw(rgb8, rng), np.rint(nir))


def _eo_scene(
    kind: str, rng: np.random.Generator, spec: SynthSpec
) -> tuple[np.ndarray, np.ndarray]:
    size = spec.size
    qa = np.zeros((1, size, size), dtype=np.uint16)
    if kind in ('haze', 'reference'):
        level = HAZE_BASE + int(rng.integers(-3, 4))
        bases = level + rng.integers(-1, 2, 3)
        rgb8 = _rgb8(rng, size, bases, 1.5, 0.5, HAZE_RANGE)
        nir = np.rint(rng.uniform(2800, 3200, (size, size)))
        return _stack(_to_raw(rgb8, rng), nir), qa
    if kind == 'night':
        ceiling = spec.night_max_value * config.RGB8_SCALE
        dark = np.floor(rng.uniform(0.0, ceiling, (4, size, size)))
        return dark.astype(np.uint16), qa
    pixels = _clean(rng, size)
    if kind == 'cloud':
        rows = _rows(rng, size, spec.cloud_fraction)
        low, high = spec.cloud_brightness
        block = rng.integers(low, high + 1, (4, rows.stop - rows.start, size))
        pixels[:, rows, :] = block
    elif kind == 'qa_cloud':
        rows = _rows(rng, size, spec.qa_fraction)
        qa[0, rows, :] = QA_CLOUD_FLAGS[int(rng.integers(0, 2))]
    elif kind == 'nodata':
        pixels[:, _rows(rng, size, spec.nodata_fraction), :] = 0
    return pixels, qa


def _sar_scene(rng: np.random.Generator, size: int) -> np.ndarray:
    """Backscatter-like VV/VH planes with multiplicative speckle."""
    texture = 1.0 + _field(rng, size, 0.15)
    speckle = rng.gamma(4.0, 0.25, (size, size))
    vv = 3000 * np.clip(texture, 0.2, None) * speckle
    vh = 0.3 * vv * rng.gamma(4.0, 0.25, (size, size))
    return np.clip(np.rint(np.stack([vv, vh])), 0, 2**16 - 1).astype(np.uint16)
