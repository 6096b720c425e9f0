import datetime
import pathlib

import numpy as np
import numpy.typing as npt

from eo_curator import catalog, models

EO_BANDS = ('B2', 'B3', 'B4', 'B8')


def eo_tile(pixels: np.ndarray | int, size: int = 20) -> models.ImageTile:
    """16-bit B2/B3/B4/B8 tile, either constant or from explicit planes."""
    if isinstance(pixels, int):
        pixels = np.full((4, size, size), pixels, dtype=np.uint16)
    return models.ImageTile(
        pixels=np.asarray(pixels, dtype=np.uint16),
        bit_depth=16,
        band_labels=EO_BANDS,
    )


def rgb_tile(
    r: object, g: object, b: object, size: int = 20
) -> models.ImageTile:
    planes = [np.broadcast_to(np.asarray(c), (size, size)) for c in (r, g, b)]
    return models.ImageTile(
        pixels=np.stack(planes).astype(np.uint8),
        bit_depth=8,
        band_labels=('R', 'G', 'B'),
    )


def checkerboard(size: int, low: int, high: int) -> np.ndarray:
    rows, cols = np.indices((size, size))
    return np.where((rows + cols) % 2 == 0, low, high)


def gaussian(
    mean: npt.ArrayLike, cov: npt.ArrayLike
) -> models.GaussianStats:
    return models.GaussianStats(
        n=10,
        mean=np.asarray(mean, dtype=np.float64),
        cov=np.asarray(cov, dtype=np.float64),
    )


def random_spd(rng: np.random.Generator, d: int) -> np.ndarray:
    a = rng.standard_normal((d, d))
    m = a.T @ a + np.eye(d)
    return (m + m.T) / 2


def record(
    scene_id: str,
    sensor: str = 'EO',
    tile_id: str = 'T001',
    date: str = '2020-01-15',
    path: pathlib.Path | None = None,
    bands: tuple[str, ...] = EO_BANDS,
    qa_path: pathlib.Path | None = None,
) -> models.SceneRecord:
    return models.SceneRecord(
        scene_id=scene_id,
        sensor=sensor,
        tile_id=tile_id,
        date=datetime.date.fromisoformat(date),
        path=path or pathlib.Path(f'{scene_id}.tif'),
        bands=bands if sensor == 'EO' else ('VV', 'VH'),
        qa_path=qa_path,
    )


def write_eo_scene(
    directory: pathlib.Path,
    scene_id: str,
    pixels: np.ndarray,
    qa: np.ndarray | None = None,
) -> models.SceneRecord:
    path = directory / f'{scene_id}.tif'
    catalog.write_tile(path, pixels.astype(np.uint16))
    qa_path = None
    if qa is not None:
        qa_path = directory / f'{scene_id}_qa.tif'
        catalog.write_tile(qa_path, qa.astype(np.uint16))
    return record(scene_id, path=path, qa_path=qa_path)
