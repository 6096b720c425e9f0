"""Best-match evaluation of model outputs against reference images.

For every reference image the distance to its closest model output is
taken, and the total is the sum of those minima. A mapping file groups
outputs and references by query key; minima never cross groups.

"""

import collections
import csv
import logging
import math
import pathlib
import typing

import numpy as np

from eo_curator import catalog, config, errors, features, models

LOGGER = logging.getLogger(__name__)

ROLES = ('output', 'reference')


def to_unit(pixels: np.ndarray) -> np.ndarray:
    """Map 8-bit and 16-bit samples onto [0, 1]; floats pass through."""
    if pixels.dtype == np.uint8:
        return pixels.astype(np.float64) / 255
    if pixels.dtype == np.uint16:
        return pixels.astype(np.float64) / 65535
    return pixels.astype(np.float64)


def load_image(path: pathlib.Path) -> np.ndarray:
    return to_unit(catalog.read_raster(path))


def pairwise_distance(
    output: np.ndarray,
    reference: np.ndarray,
    norm: config.DistanceNorm = config.DistanceNorm.MEAN_ABS,
) -> float:
    """Mean absolute (or squared) difference over all pixels and channels.

    Raises:
        DimensionMismatch: the images differ in shape.
        OutOfRange: a value lies outside [0, 1] or is not finite.

    """
    if output.shape != reference.shape:
        raise errors.DimensionMismatch(
            f'output {output.shape} vs reference {reference.shape}'
        )
    for image in (output, reference):
        if not np.all((image >= 0) & (image <= 1)):
            raise errors.OutOfRange('image values must lie in [0, 1]')
    difference = output.astype(np.float64) - reference.astype(np.float64)
    if norm == config.DistanceNorm.MEAN_SQ:
        return float(np.mean(difference * difference))
    return float(np.mean(np.abs(difference)))


def sharpness(image: np.ndarray) -> float:
    """Mean forward-difference gradient magnitude over all channels."""
    planes = image if image.ndim == 3 else image[np.newaxis]
    return float(np.mean([features.mean_gradient(p) for p in planes]))


def eval_set(
    outputs: typing.Sequence[np.ndarray],
    references: typing.Sequence[np.ndarray],
    norm: config.DistanceNorm = config.DistanceNorm.MEAN_ABS,
    output_ids: typing.Sequence[str] | None = None,
    reference_ids: typing.Sequence[str] | None = None,
    query_key: str | None = None,
) -> models.EvalReport:
    """Sum over references of the distance to the closest output.

    Ties between outputs go to the lowest output index. The total is
    summed with :func:`math.fsum`, so it does not depend on reference
    order.

    Raises:
        EmptySet: ``outputs`` or ``references`` is empty.
        DataError: ``reference_ids`` repeats an id.

    """
    if not outputs or not references:
        raise errors.EmptySet('outputs and references must be non-empty')
    output_ids = output_ids or [str(i) for i in range(len(outputs))]
    reference_ids = reference_ids or [str(j) for j in range(len(references))]
    if len(set(reference_ids)) != len(reference_ids):
        raise errors.DataError('reference ids must be unique')
    rows = []
    for reference_id, reference in zip(
        reference_ids, references, strict=True
    ):
        best_index, best = 0, math.inf
        for index, output in enumerate(outputs):
            distance = pairwise_distance(output, reference, norm)
            if distance < best:
                best_index, best = index, distance
        rows.append(
            (
                models.ReferenceDistance(
                    reference_id=reference_id,
                    best_output_id=output_ids[best_index],
                    distance=best,
                    query_key=query_key,
                ),
                pairwise_distance(
                    outputs[best_index],
                    reference,
                    config.DistanceNorm.MEAN_ABS,
                ),
            )
        )
    return models.EvalReport(
        total=math.fsum(row.distance for row, _mae in rows),
        per_reference=[row for row, _mae in rows],
        mean_mae=math.fsum(mae for _row, mae in rows) / len(rows),
        sharpness=float(np.mean([sharpness(o) for o in outputs])),
        norm=norm.value,
    )


def combine(reports: typing.Sequence[models.EvalReport]) -> models.EvalReport:
    """Merge per-group reports into one."""
    if not reports:
        raise errors.EmptySet('no query groups to evaluate')
    rows = [row for report in reports for row in report.per_reference]
    counts = [len(report.per_reference) for report in reports]
    return models.EvalReport(
        total=math.fsum(row.distance for row in rows),
        per_reference=rows,
        mean_mae=math.fsum(
            r.mean_mae * n for r, n in zip(reports, counts, strict=True)
        )
        / sum(counts),
        sharpness=float(np.mean([report.sharpness for report in reports])),
        norm=reports[0].norm,
    )


def read_mapping(
    path: pathlib.Path,
) -> dict[str, dict[str, list[str]]]:
    """Parse a ``query_key,role,path`` mapping file.

    Returns:
        ``{query_key: {'output': [...], 'reference': [...]}}`` with keys in
        sorted order and paths in file order.

    Raises:
        MalformedCatalog: an unknown role, a short row or a reference
            listed twice for one query key.

    """
    groups: dict[str, dict[str, list[str]]] = collections.defaultdict(
        lambda: {role: [] for role in ROLES}
    )
    try:
        with path.open(newline='', encoding='utf-8') as handle:
            for number, row in enumerate(csv.reader(handle), start=1):
                if not row or row[0].startswith('#'):
                    continue
                if number == 1 and row[:2] == ['query_key', 'role']:
                    continue
                if len(row) != 3 or row[1] not in ROLES:
                    raise errors.MalformedCatalog(
                        f'{path}:{number}: expected query_key,role,path'
                    )
                group = groups[row[0]][row[1]]
                if row[1] == 'reference' and row[2] in group:
                    raise errors.MalformedCatalog(
                        f'{path}:{number}: reference {row[2]} repeated for '
                        f'query {row[0]}'
                    )
                group.append(row[2])
    except OSError as error:
        raise errors.MalformedCatalog(f'Cannot read {path}: {error}') from (
            error
        )
    return {key: groups[key] for key in sorted(groups)}


def evaluate_mapping(
    mapping: pathlib.Path,
    outputs_dir: pathlib.Path,
    references_dir: pathlib.Path,
    norm: config.DistanceNorm = config.DistanceNorm.MEAN_ABS,
) -> models.EvalReport:
    """Evaluate every query group named in a mapping file."""
    reports = []
    for key, group in read_mapping(mapping).items():
        if not group['output'] or not group['reference']:
            raise errors.EmptySet(f'query {key} lacks outputs or references')
        reports.append(
            eval_set(
                [load_image(outputs_dir / p) for p in group['output']],
                [load_image(references_dir / p) for p in group['reference']],
                norm,
                output_ids=group['output'],
                reference_ids=group['reference'],
                query_key=key,
            )
        )
        LOGGER.debug('Query %s total %.6f', key, reports[-1].total)
    report = combine(reports)
    LOGGER.info(
        'Evaluated %i references in %i queries: total %.6f',
        len(report.per_reference),
        len(reports),
        report.total,
    )
    return report
