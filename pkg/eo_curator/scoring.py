"""Distribution scoring of EO tiles against a cloud reference set.

Each surviving tile is summarised as a Gaussian over its patch features
and scored by its Fréchet distance to the Gaussian pooled from every
patch of the cloud reference images. Tiles whose score falls below the
threshold look too much like cloud and are rejected.

"""

import logging
import typing

import numpy as np

from eo_curator import (
    catalog,
    config,
    errors,
    features,
    filters,
    models,
    statistics,
)

LOGGER = logging.getLogger(__name__)


def thresholds(scores: models.ScoreSet, beta: float) -> tuple[float, float]:
    """Return the ``(literal, interpolated)`` score thresholds.

    The literal form is ``(min + max - min) * beta``, which reduces to
    ``max * beta``; the interpolated form is ``min + (max - min) * beta``.

    Raises:
        EmptyScoreSet: there are no scores.

    """
    if not scores.scores:
        raise errors.EmptyScoreSet('cannot threshold an empty score set')
    low = min(scores.scores.values())
    high = max(scores.scores.values())
    return (low + high - low) * beta, low + (high - low) * beta


def stage3_threshold(
    scores: models.ScoreSet, cfg: config.Stage3Config
) -> float:
    """Score threshold in the configured form."""
    literal, interpolated = thresholds(scores, cfg.beta)
    if cfg.threshold_form == config.ThresholdForm.INTERPOLATION:
        return interpolated
    return literal


def stage3_filter(
    scene_id: str, score: float, f_th: float
) -> models.FilterVerdict:
    """Reject a tile iff its score is strictly below ``f_th``."""
    if score < f_th:
        return models.FilterVerdict.reject(
            scene_id, models.Stage.STAGE3, models.Rule.FRECHET_SCORE, score
        )
    return models.FilterVerdict.keep(scene_id, score)


def accumulate_rows(rows: np.ndarray) -> statistics.GaussianAccumulator:
    accumulator = statistics.GaussianAccumulator(rows.shape[1])
    return accumulator.update(rows)


def scene_accumulator(
    record: models.SceneRecord, rgb: config.RgbConfig, patch_size: int
) -> statistics.GaussianAccumulator:
    """Partial accumulator over the handcrafted patch features of a scene"""
    tile = catalog.load_tile(record)
    composite = filters.to_rgb8(tile, rgb.bands, rgb.scale)
    return accumulate_rows(features.patch_features(composite, patch_size))


def external_accumulator(
    table: typing.Mapping[str, np.ndarray], scene_id: str
) -> statistics.GaussianAccumulator:
    """Partial accumulator over externally supplied rows for a scene"""
    try:
        rows = table[scene_id]
    except KeyError as error:
        raise errors.UnknownScene(
            f'{scene_id} has no rows in the external feature file'
        ) from error
    return accumulate_rows(rows)


def pool(
    partials: typing.Iterable[statistics.GaussianAccumulator],
) -> models.GaussianStats:
    """Merge partial accumulators in iteration order.

    Raises:
        EmptyStream: there are no partials.

    """
    merged: statistics.GaussianAccumulator | None = None
    for partial in partials:
        if merged is None:
            merged = statistics.GaussianAccumulator(partial.dimension)
        merged.merge(partial)
    if merged is None:
        raise errors.EmptyStream('the cloud reference set is empty')
    return merged.finalize()


def score_tiles(
    tiles: typing.Mapping[str, models.GaussianStats],
    reference: models.GaussianStats,
    cfg: config.Stage3Config,
    extractor_id: str,
) -> tuple[list[models.FilterVerdict], list[models.ScoreEntry], float, float]:
    """Score every tile and apply the configured threshold.

    Verdicts and report rows come back ordered by scene id, so the result
    does not depend on the order of ``tiles``.

    Returns:
        verdicts, report rows, literal threshold, interpolated threshold

    """
    scores = models.ScoreSet(
        scores={
            scene_id: statistics.frechet_distance(
                tiles[scene_id], reference, cfg.epsilon_reg
            )
            for scene_id in sorted(tiles)
        }
    )
    literal, interpolated = thresholds(scores, cfg.beta)
    f_th = stage3_threshold(scores, cfg)
    LOGGER.info(
        'Scored %i tiles; thresholds literal=%.6g interpolation=%.6g',
        scores.n,
        literal,
        interpolated,
    )
    verdicts, entries = [], []
    for scene_id, score in scores.scores.items():
        verdict = stage3_filter(scene_id, score, f_th)
        verdicts.append(verdict)
        entries.append(
            models.ScoreEntry(
                scene_id=scene_id,
                score=score,
                kept=verdict.kept,
                f_th_literal=literal,
                f_th_interp=interpolated,
                extractor_id=extractor_id,
            )
        )
    return verdicts, entries, literal, interpolated
