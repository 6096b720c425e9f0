"""Pixel-statistics filters for EO tiles.

Stage 1 rejects cloudy tiles using the QA60 mask and a raw reflectance
threshold; stage 2 rejects nighttime and no-data tiles from an 8-bit RGB
rendering. Rule order inside each stage is fixed: ``QACloud`` before
``PixelThreshold`` and ``Night`` before ``NoData``.

"""

import fractions
import logging

import numpy as np

from eo_curator import catalog, config, errors, models

LOGGER = logging.getLogger(__name__)


def stage1_filter(
    scene_id: str,
    tile: models.ImageTile,
    qa: models.QAMask | None,
    cfg: config.Stage1Config,
) -> models.FilterVerdict:
    """Reject cloud-covered tiles.

    The QA rule fires when the flagged fraction exceeds
    ``cfg.qa_cloud_ratio``; otherwise the pixel rule fires when the
    fraction of pixels with any band above ``cfg.alpha`` exceeds
    ``cfg.bright_pixel_ratio``. A kept verdict records the bright fraction.

    Raises:
        DimensionMismatch: the QA mask and tile differ in size.

    """
    total = tile.width * tile.height
    if qa is not None:
        if (qa.height, qa.width) != (tile.height, tile.width):
            raise errors.DimensionMismatch(
                f'{scene_id}: QA mask {qa.width}x{qa.height} vs tile '
                f'{tile.width}x{tile.height}'
            )
        qa_fraction = qa.flagged_count / total
        if qa_fraction > cfg.qa_cloud_ratio:
            return models.FilterVerdict.reject(
                scene_id,
                models.Stage.STAGE1,
                models.Rule.QA_CLOUD,
                qa_fraction,
            )
    bright = np.any(tile.pixels > cfg.alpha, axis=0)
    bright_fraction = int(np.count_nonzero(bright)) / total
    if bright_fraction > cfg.bright_pixel_ratio:
        return models.FilterVerdict.reject(
            scene_id,
            models.Stage.STAGE1,
            models.Rule.PIXEL_THRESHOLD,
            bright_fraction,
        )
    return models.FilterVerdict.keep(scene_id, bright_fraction)


def to_rgb8(
    tile: models.ImageTile, rgb_bands: tuple[str, str, str], scale: float
) -> models.ImageTile:
    """Render three bands as an 8-bit composite.

    Each channel is ``clip(round(raw / scale), 0, 255)``; rounding is
    half-to-even.

    Raises:
        MissingBand: one of ``rgb_bands`` is not in the tile.

    """
    if scale <= 0:
        raise ValueError('scale must be positive')
    planes = np.stack([tile.band(label) for label in rgb_bands])
    scaled = np.rint(planes.astype(np.float64) / scale)
    return models.ImageTile(
        pixels=np.clip(scaled, 0, 255).astype(np.uint8),
        bit_depth=8,
        band_labels=('R', 'G', 'B'),
    )


def value_channel(rgb: models.ImageTile) -> np.ndarray:
    """HSV value, ``max(R, G, B)``, of an 8-bit composite."""
    if rgb.bit_depth != 8 or rgb.bands != 3:
        raise errors.WrongBandLayout(
            f'expected 8-bit 3-band RGB, got {rgb.bit_depth}-bit '
            f'{rgb.bands}-band'
        )
    return np.asarray(rgb.pixels.max(axis=0))


def stage2_filter(
    scene_id: str, rgb: models.ImageTile, cfg: config.Stage2Config
) -> models.FilterVerdict:
    """Reject nighttime and no-data tiles.

    Means and ratios are compared as exact rationals over integer sums, so
    the decision never depends on float accumulation order.

    Raises:
        WrongBandLayout: ``rgb`` is not an 8-bit 3-band composite.

    """
    value = value_channel(rgb)
    total = value.size
    value_sum = int(value.sum(dtype=np.int64))
    mean_value = fractions.Fraction(value_sum, total)
    if mean_value < fractions.Fraction(cfg.brightness_threshold):
        return models.FilterVerdict.reject(
            scene_id, models.Stage.STAGE2, models.Rule.NIGHT, float(mean_value)
        )
    dark = int(np.count_nonzero(value < cfg.nodata_value_threshold))
    if fractions.Fraction(dark, total) > fractions.Fraction(cfg.nodata_ratio):
        return models.FilterVerdict.reject(
            scene_id, models.Stage.STAGE2, models.Rule.NO_DATA, dark / total
        )
    return models.FilterVerdict.keep(scene_id, float(mean_value))


def evaluate_eo_scene(
    record: models.SceneRecord, cfg: config.PipelineConfig
) -> models.FilterVerdict:
    """Run stage 1 then stage 2 on one catalog record."""
    tile = catalog.load_tile(record)
    qa_tile = catalog.load_qa(record)
    qa = (
        catalog.decode_qa_mask(qa_tile, cfg.qa.cloud_bits)
        if qa_tile is not None
        else None
    )
    verdict = stage1_filter(record.scene_id, tile, qa, cfg.stage1)
    if not verdict.kept:
        LOGGER.debug(
            '%s rejected by %s (%.6f)',
            record.scene_id,
            verdict.rule.value,
            verdict.statistic,
        )
        return verdict
    rgb = to_rgb8(tile, cfg.rgb.bands, cfg.rgb.scale)
    verdict = stage2_filter(record.scene_id, rgb, cfg.stage2)
    LOGGER.debug(
        '%s stage 2 %s (%.6f)',
        record.scene_id,
        'kept' if verdict.kept else verdict.rule.value,
        verdict.statistic,
    )
    return verdict
