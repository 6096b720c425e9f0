import collections
import csv
import io
import logging
import typing

from eo_curator import errors, models

LOGGER = logging.getLogger(__name__)


def build_pairs(
    clean_eo: typing.Iterable[models.SceneRecord],
    sar: typing.Iterable[models.SceneRecord],
    window_days: int = 30,
    max_pairs_per_eo: int | None = None,
    stage_counts: models.StageCounts | None = None,
    config_fingerprint: str = '',
) -> models.PairManifest:
    """Pair each clean EO scene with SAR scenes of the same grid cell.

    A pair is formed when ``|SAR date - EO date| <= window_days``. With
    ``max_pairs_per_eo`` only the nearest SAR scenes are kept (ties go to
    the earlier date, then the lower scene id). Pairs are ordered by
    ``(tile_id, EO date, |day_offset|, sar_scene_id)`` with the EO scene
    id as the final tie-breaker, independent of input order.

    Raises:
        NegativeWindow: ``window_days`` is negative.
        SensorMismatch: a record of the wrong sensor was supplied.

    """
    if window_days < 0:
        raise errors.NegativeWindow(f'window of {window_days} days')
    eo_records = list(clean_eo)
    by_tile: dict[str, list[models.SceneRecord]] = collections.defaultdict(
        list
    )
    for record in sar:
        if record.sensor != models.Sensor.SAR:
            raise errors.SensorMismatch(f'{record.scene_id} is not SAR')
        by_tile[record.tile_id].append(record)

    keyed: list[tuple[tuple[typing.Any, ...], models.PairRecord]] = []
    for eo in eo_records:
        if eo.sensor != models.Sensor.EO:
            raise errors.SensorMismatch(f'{eo.scene_id} is not EO')
        candidates = []
        for candidate in by_tile.get(eo.tile_id, []):
            offset = (candidate.date - eo.date).days
            if abs(offset) <= window_days:
                candidates.append((offset, candidate))
        candidates.sort(
            key=lambda item: (abs(item[0]), item[1].date, item[1].scene_id)
        )
        if max_pairs_per_eo is not None:
            candidates = candidates[:max_pairs_per_eo]
        for offset, candidate in candidates:
            keyed.append(
                (
                    (
                        eo.tile_id,
                        eo.date,
                        abs(offset),
                        candidate.scene_id,
                        eo.scene_id,
                    ),
                    models.PairRecord(
                        eo_scene_id=eo.scene_id,
                        sar_scene_id=candidate.scene_id,
                        tile_id=eo.tile_id,
                        day_offset=offset,
                    ),
                )
            )
    keyed.sort(key=lambda item: item[0])
    LOGGER.info(
        'Formed %i pairs from %i clean EO scenes', len(keyed), len(eo_records)
    )
    if stage_counts is None:
        stage_counts = models.StageCounts(
            input=len(eo_records), kept=len(eo_records)
        )
    return models.PairManifest(
        config_fingerprint=config_fingerprint,
        stage_counts=stage_counts,
        pairs=[pair for _key, pair in keyed],
    )


def to_csv(manifest: models.PairManifest) -> str:
    """Flat ``eo,sar,tile,day_offset`` rendering of a manifest."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(('eo', 'sar', 'tile', 'day_offset'))
    for pair in manifest.pairs:
        writer.writerow(
            (
                pair.eo_scene_id,
                pair.sar_scene_id,
                pair.tile_id,
                pair.day_offset,
            )
        )
    return buffer.getvalue()
