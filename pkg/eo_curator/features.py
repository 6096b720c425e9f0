"""Patch features for distribution scoring.

The handcrafted extractor produces a frozen 24-value layout per 8-bit RGB
image:

====== ===========================================================
index  value
====== ===========================================================
0-5    R: mean, std, fraction in [0,64), [64,128), [128,192), [192,256)
6-11   G: same six values
12-17  B: same six values
18-20  mean forward-difference gradient magnitude of R, G, B
21     mean of V = max(R, G, B)
22     variance of V
23     fraction of pixels with V > 200
====== ===========================================================

Standard deviations and variances are population moments. Precomputed
features from any other tool can be supplied instead through the CCAF
binary format (see :func:`read_feature_file`).

"""

import logging
import pathlib
import typing

import numpy as np

from eo_curator import errors, filters, models

LOGGER = logging.getLogger(__name__)

EXTRACTOR_ID = 'handcrafted-v1'
FEATURE_DIM = 24
HISTOGRAM_BINS = 4
MIN_PATCH_SIZE = 8

FEATURE_MAGIC = b'CCAF'
FEATURE_VERSION = 1
_HEADER = np.dtype(
    [('magic', 'S4'), ('version', '<u4'), ('d', '<u4'), ('rows', '<u8')]
)


def mean_gradient(plane: np.ndarray) -> float:
    """Mean forward-difference gradient magnitude of one plane.

    The magnitude is ``|dx| + |dy|``: the mean absolute horizontal
    difference plus the mean absolute vertical difference. Planes narrower
    than two pixels along an axis contribute nothing along it.

    """
    values = plane.astype(np.float64)
    total = 0.0
    if values.shape[1] > 1:
        total += float(np.mean(np.abs(np.diff(values, axis=1))))
    if values.shape[0] > 1:
        total += float(np.mean(np.abs(np.diff(values, axis=0))))
    return total


def extract_features_handcrafted(rgb: models.ImageTile) -> np.ndarray:
    """Compute the 24-value handcrafted feature vector of an RGB image.

    Raises:
        WrongBandLayout: ``rgb`` is not an 8-bit 3-band composite.

    """
    value = filters.value_channel(rgb).astype(np.float64)
    features = np.empty(FEATURE_DIM, dtype=np.float64)
    for channel in range(3):
        plane = rgb.pixels[channel]
        counts = np.bincount(
            plane.ravel() // (256 // HISTOGRAM_BINS), minlength=HISTOGRAM_BINS
        )
        offset = channel * 6
        features[offset] = plane.mean(dtype=np.float64)
        features[offset + 1] = plane.std(dtype=np.float64)
        features[offset + 2 : offset + 6] = counts / plane.size
        features[18 + channel] = mean_gradient(plane)
    features[21] = value.mean()
    features[22] = value.var()
    features[23] = np.count_nonzero(value > 200) / value.size
    return features


def tile_patches(
    tile: models.ImageTile, patch_size: int
) -> list[models.ImageTile]:
    """Split a tile into non-overlapping square patches in row-major order.

    Edge strips narrower than ``patch_size`` are dropped.

    Raises:
        PatchTooSmall: ``patch_size`` is below 8 pixels.
        PatchTooLarge: ``patch_size`` exceeds the tile width or height.

    """
    if patch_size < MIN_PATCH_SIZE:
        raise errors.PatchTooSmall(
            f'patch_size {patch_size} is below {MIN_PATCH_SIZE}'
        )
    if patch_size > tile.width or patch_size > tile.height:
        raise errors.PatchTooLarge(
            f'patch_size {patch_size} exceeds {tile.width}x{tile.height}'
        )
    patches = []
    for top in range(0, tile.height - patch_size + 1, patch_size):
        for left in range(0, tile.width - patch_size + 1, patch_size):
            patches.append(
                models.ImageTile(
                    pixels=tile.pixels[
                        :, top : top + patch_size, left : left + patch_size
                    ],
                    bit_depth=tile.bit_depth,
                    band_labels=tile.band_labels,
                )
            )
    return patches


def patch_features(rgb: models.ImageTile, patch_size: int) -> np.ndarray:
    """Handcrafted features of every patch, one row per patch."""
    return np.stack(
        [
            extract_features_handcrafted(patch)
            for patch in tile_patches(rgb, patch_size)
        ]
    )


def read_feature_file(
    path: pathlib.Path, index_path: pathlib.Path
) -> dict[str, np.ndarray]:
    """Load externally computed per-patch features.

    ``path`` holds a 20-byte little-endian header (magic ``CCAF``, u32
    version, u32 dimension, u64 row count) followed by float32 rows.
    ``index_path`` is a text file of ``scene_id start stop`` lines naming
    half-open row ranges.

    Raises:
        MalformedFeatureFile: bad magic or version, short payload, non-finite
            values, or index ranges outside the row count.

    """
    try:
        payload = path.read_bytes()
        index_lines = index_path.read_text(encoding='utf-8').splitlines()
    except OSError as error:
        raise errors.MalformedFeatureFile(str(error)) from error
    if len(payload) < _HEADER.itemsize:
        raise errors.MalformedFeatureFile(f'{path}: truncated header')
    header = np.frombuffer(payload, dtype=_HEADER, count=1)[0]
    if header['magic'] != FEATURE_MAGIC:
        raise errors.MalformedFeatureFile(f'{path}: bad magic')
    if header['version'] != FEATURE_VERSION:
        raise errors.MalformedFeatureFile(
            f'{path}: unsupported version {header["version"]}'
        )
    d, rows = int(header['d']), int(header['rows'])
    expected = _HEADER.itemsize + d * rows * 4
    if len(payload) != expected:
        raise errors.MalformedFeatureFile(
            f'{path}: {len(payload)} bytes, expected {expected}'
        )
    matrix = np.frombuffer(
        payload, dtype='<f4', count=d * rows, offset=_HEADER.itemsize
    ).reshape(rows, d)
    if not np.all(np.isfinite(matrix)):
        raise errors.MalformedFeatureFile(f'{path}: non-finite feature')
    features: dict[str, np.ndarray] = {}
    for number, line in enumerate(index_lines, start=1):
        if not line.strip():
            continue
        try:
            scene_id, start, stop = line.split()
            first, last = int(start), int(stop)
        except ValueError as error:
            raise errors.MalformedFeatureFile(
                f'{index_path}:{number}: expected "scene_id start stop"'
            ) from error
        if not 0 <= first < last <= rows:
            raise errors.MalformedFeatureFile(
                f'{index_path}:{number}: range {first}-{last} outside '
                f'{rows} rows'
            )
        features[scene_id] = matrix[first:last].astype(np.float64)
    LOGGER.debug('Read %i feature rows for %i scenes', rows, len(features))
    return features


def write_feature_file(
    path: pathlib.Path,
    index_path: pathlib.Path,
    features: typing.Mapping[str, np.ndarray],
) -> None:
    """Write per-scene feature rows in the CCAF format plus its index."""
    blocks = [np.atleast_2d(rows) for rows in features.values()]
    dims = {block.shape[1] for block in blocks}
    if len(dims) > 1:
        raise errors.DimensionMismatch(f'mixed feature dimensions {dims}')
    d = dims.pop() if dims else 0
    total = sum(block.shape[0] for block in blocks)
    header = np.array([(FEATURE_MAGIC, FEATURE_VERSION, d, total)], _HEADER)
    lines, start = [], 0
    with path.open('wb') as handle:
        handle.write(header.tobytes())
        for scene_id, block in zip(features, blocks, strict=True):
            handle.write(block.astype('<f4').tobytes())
            lines.append(f'{scene_id} {start} {start + block.shape[0]}\n')
            start += block.shape[0]
    index_path.write_text(''.join(lines), encoding='utf-8')
