"""Scene catalogs, raster decoding and QA masks.

The catalog is a UTF-8 CSV file with a header row::

    scene_id,sensor,tile_id,date,path,bands,qa_path
    S2_0001,EO,T001,2020-01-15,eo/S2_0001.tif,B2;B3;B4;B8,qa/S2_0001.tif
    S1_0001,SAR,T001,2019-12-20,sar/S1_0001.tif,VV;VH,

``qa_path`` is optional (the column may be omitted entirely) and only EO
rows may fill it. Relative paths resolve against the catalog's directory.

"""

import csv
import datetime
import logging
import pathlib
import typing
import warnings

import numpy as np
import pydantic
import rasterio
import rasterio.errors

from eo_curator import errors, models

LOGGER = logging.getLogger(__name__)

COLUMNS = ('scene_id', 'sensor', 'tile_id', 'date', 'path', 'bands')
QA_BAND = 'QA60'

_DRIVERS = {'.tif': 'GTiff', '.tiff': 'GTiff', '.png': 'PNG'}
_BIT_DEPTHS = {np.dtype(np.uint8): 8, np.dtype(np.uint16): 16}


def load_catalog(path: pathlib.Path) -> list[models.SceneRecord]:
    """Read a scene catalog.

    Records come back sorted by ``(tile_id, date, scene_id)`` so repeated
    ingestion of the same file yields the same sequence.

    Raises:
        MalformedCatalog: missing header columns, a short row, an unknown
            sensor or an unparseable date.
        DuplicateSceneId: two rows share a ``scene_id``.

    """
    base = path.parent
    records: dict[str, models.SceneRecord] = {}
    try:
        with path.open(newline='', encoding='utf-8') as handle:
            reader = csv.DictReader(handle)
            missing = set(COLUMNS) - set(reader.fieldnames or [])
            if missing:
                raise errors.MalformedCatalog(
                    f'{path}: header lacks {", ".join(sorted(missing))}'
                )
            for row in reader:
                record = _parse_row(row, base, reader.line_num)
                if record.scene_id in records:
                    raise errors.DuplicateSceneId(
                        f'{path}:{reader.line_num}: duplicate scene_id '
                        f'{record.scene_id!r}'
                    )
                records[record.scene_id] = record
    except OSError as error:
        raise errors.MalformedCatalog(f'Cannot read {path}: {error}') from (
            error
        )
    LOGGER.debug('Loaded %i scenes from %s', len(records), path)
    return sorted(
        records.values(), key=lambda r: (r.tile_id, r.date, r.scene_id)
    )


def _parse_row(
    row: dict[str, str | None], base: pathlib.Path, line: int
) -> models.SceneRecord:
    if any(not row.get(column) for column in COLUMNS):
        raise errors.MalformedCatalog(f'line {line}: empty or missing field')
    values = {column: str(row[column]).strip() for column in COLUMNS}
    try:
        date = datetime.date.fromisoformat(values['date'])
    except ValueError as error:
        raise errors.MalformedCatalog(
            f'line {line}: invalid date {values["date"]!r}'
        ) from error
    qa_path = (row.get('qa_path') or '').strip()
    try:
        return models.SceneRecord(
            scene_id=values['scene_id'],
            sensor=values['sensor'],
            tile_id=values['tile_id'],
            date=date,
            path=base / values['path'],
            bands=tuple(b.strip() for b in values['bands'].split(';')),
            qa_path=base / qa_path if qa_path else None,
        )
    except pydantic.ValidationError as error:
        raise errors.MalformedCatalog(f'line {line}: {error}') from error


def write_catalog(
    path: pathlib.Path, records: typing.Iterable[models.SceneRecord]
) -> None:
    """Write records in catalog format, with paths relative to ``path``."""
    base = path.parent
    with path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow((*COLUMNS, 'qa_path'))
        for record in records:
            writer.writerow(
                (
                    record.scene_id,
                    record.sensor.value,
                    record.tile_id,
                    record.date.isoformat(),
                    _relative(record.path, base),
                    ';'.join(record.bands),
                    _relative(record.qa_path, base) if record.qa_path else '',
                )
            )


def _relative(path: pathlib.Path, base: pathlib.Path) -> str:
    try:
        return path.relative_to(base).as_posix()
    except ValueError:
        return str(path)


def read_raster(path: pathlib.Path) -> np.ndarray:
    """Decode a PNG or TIFF into a ``(bands, height, width)`` array.

    Raises:
        DecodeError: the file is missing, truncated or not a raster.

    """
    try:
        with warnings.catch_warnings():
            warnings.simplefilter(
                'ignore', rasterio.errors.NotGeoreferencedWarning
            )
            with rasterio.open(path) as dataset:
                return typing.cast(np.ndarray, dataset.read())
    except (rasterio.errors.RasterioError, OSError) as error:
        raise errors.DecodeError(f'Cannot decode {path}: {error}') from error


def load_tile(record: models.SceneRecord) -> models.ImageTile:
    """Decode the raster a catalog record points at.

    Raises:
        DecodeError: unreadable file or a sample type other than 8- or
            16-bit unsigned integers.
        BandCountMismatch: the file's band count differs from the record.

    """
    return _decode(record.path, record.bands, record.scene_id)


def load_qa(record: models.SceneRecord) -> models.ImageTile | None:
    """Decode the QA60 raster of an EO record, if it has one."""
    if record.qa_path is None:
        return None
    return _decode(record.qa_path, (QA_BAND,), record.scene_id)


def _decode(
    path: pathlib.Path, bands: tuple[str, ...], scene_id: str
) -> models.ImageTile:
    pixels = read_raster(path)
    bit_depth = _BIT_DEPTHS.get(pixels.dtype)
    if bit_depth is None:
        raise errors.DecodeError(
            f'{path}: unsupported sample type {pixels.dtype}'
        )
    if pixels.shape[0] != len(bands):
        raise errors.BandCountMismatch(
            f'{scene_id}: file has {pixels.shape[0]} bands, '
            f'catalog declares {len(bands)}'
        )
    return models.ImageTile(
        pixels=pixels,
        bit_depth=typing.cast(typing.Literal[8, 16], bit_depth),
        band_labels=bands,
    )


def decode_qa_mask(
    tile: models.ImageTile, cloud_bits: typing.AbstractSet[int]
) -> models.QAMask:
    """Wrap a single-band QA raster as a cloud mask.

    A pixel is cloud-flagged when any bit in ``cloud_bits`` is set.

    Raises:
        NotSingleBand: the tile has more than one band.

    """
    if tile.bands != 1:
        raise errors.NotSingleBand(f'QA raster has {tile.bands} bands')
    return models.QAMask(
        flags=tile.pixels[0], cloud_bits=frozenset(cloud_bits)
    )


def write_tile(
    path: pathlib.Path, pixels: np.ndarray, compress: str | None = None
) -> None:
    """Encode ``(bands, height, width)`` pixels as PNG or TIFF.

    The format follows the file suffix. PNG accepts 1-4 bands of 8- or
    16-bit samples; TIFF accepts any band count and also 32-bit floats.

    """
    driver = _DRIVERS.get(path.suffix.lower())
    if driver is None:
        raise errors.DecodeError(f'No raster encoder for {path.suffix}')
    if pixels.ndim == 2:
        pixels = pixels[np.newaxis]
    profile: dict[str, typing.Any] = {
        'driver': driver,
        'width': pixels.shape[2],
        'height': pixels.shape[1],
        'count': pixels.shape[0],
        'dtype': pixels.dtype.name,
    }
    if driver == 'GTiff' and compress:
        profile['compress'] = compress
    path.parent.mkdir(parents=True, exist_ok=True)
    with warnings.catch_warnings():
        warnings.simplefilter(
            'ignore', rasterio.errors.NotGeoreferencedWarning
        )
        with rasterio.open(path, 'w', **profile) as dataset:
            dataset.write(pixels)
