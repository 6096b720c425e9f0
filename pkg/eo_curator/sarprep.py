"""SAR composites, outlier suppression and normalization.

Values are taken as they come from the raster (linear or dB); nothing
here converts units.

"""

import ast
import logging
import operator
import pathlib
import typing

import numpy as np
import scipy.ndimage

from eo_curator import catalog, config, errors, models

LOGGER = logging.getLogger(__name__)

TANH_EPSILON = 1e-12
_OPEN_UNIT = np.nextafter(1.0, 0.0)

_BINARY = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
}


def synthesize_3ch(
    vv: np.ndarray,
    vh: np.ndarray,
    recipe: config.Recipe = config.Recipe.VV_VH_AVG,
    expression: str | None = None,
) -> models.SarComposite:
    """Build a three-channel composite from the VV and VH planes.

    ``VV_VH_Avg`` yields ``(VV, VH, (VV + VH) / 2)``. ``Custom`` replaces
    the third channel with ``expression``, an arithmetic expression over
    the names ``vv`` and ``vh`` (numbers, ``+ - * /``, unary minus and
    parentheses only).

    Raises:
        DimensionMismatch: the planes differ in shape.
        NonFinite: an input or the custom channel holds NaN or infinity.

    """
    vv = np.asarray(vv, dtype=np.float64)
    vh = np.asarray(vh, dtype=np.float64)
    if vv.shape != vh.shape or vv.ndim != 2:
        raise errors.DimensionMismatch(
            f'VV {vv.shape} and VH {vh.shape} must be equal 2-D planes'
        )
    if not (np.all(np.isfinite(vv)) and np.all(np.isfinite(vh))):
        raise errors.NonFinite('SAR planes contain non-finite values')
    if recipe == config.Recipe.CUSTOM:
        if not expression:
            raise ValueError('the Custom recipe needs an expression')
        with np.errstate(divide='ignore', invalid='ignore'):
            third = np.broadcast_to(
                _evaluate(expression, {'vv': vv, 'vh': vh}), vv.shape
            )
        if not np.all(np.isfinite(third)):
            raise errors.NonFinite(f'{expression!r} produced non-finite data')
        name = f'Custom({expression})'
    else:
        third = (vv + vh) / 2
        name = config.Recipe.VV_VH_AVG.value
    return models.SarComposite(
        channels=np.stack([vv, vh, third]), recipe=name
    )


def _evaluate(
    expression: str, names: dict[str, np.ndarray]
) -> np.ndarray | float:
    try:
        tree = ast.parse(expression, mode='eval')
    except SyntaxError as error:
        raise errors.ConfigError(f'Invalid expression {expression!r}') from (
            error
        )

    def visit(node: ast.AST) -> typing.Any:
        if isinstance(node, ast.Expression):
            return visit(node.body)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINARY:
            return _BINARY[type(node.op)](visit(node.left), visit(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(
            node.op, ast.USub | ast.UAdd
        ):
            operand = visit(node.operand)
            return -operand if isinstance(node.op, ast.USub) else operand
        if isinstance(node, ast.Constant) and isinstance(
            node.value, int | float
        ):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id in names:
            return names[node.id]
        raise errors.ConfigError(
            f'Unsupported element {ast.dump(node)} in {expression!r}'
        )

    return typing.cast(np.ndarray | float, visit(tree))


def median_blur(plane: np.ndarray, k: int = 3) -> np.ndarray:
    """Replace each pixel with the median of its ``k x k`` neighbourhood.

    Borders are handled by edge replication.

    Raises:
        EvenKernel: ``k`` is even or below 3.
        PlaneTooSmall: either plane dimension is smaller than ``k``.

    """
    if k < 3 or k % 2 == 0:
        raise errors.EvenKernel(f'kernel size {k} must be odd and >= 3')
    if plane.ndim != 2 or min(plane.shape) < k:
        raise errors.PlaneTooSmall(f'plane {plane.shape} smaller than {k}')
    return typing.cast(
        np.ndarray, scipy.ndimage.median_filter(plane, size=k, mode='nearest')
    )


def normalize(
    planes: np.ndarray, spec: config.NormalizationSpec
) -> np.ndarray:
    """Normalize each plane of a ``(channels, height, width)`` stack.

    ``Dataset1MinMax`` maps to [0, 1] by min-max and then to [-1, 1];
    a constant plane under per-image min-max maps to 0. ``Dataset2Tanh``
    applies ``tanh((x - median) / (tanh_scale * MAD + 1e-12))``, kept
    strictly inside (-1, 1).

    Raises:
        NonFinite: the input holds NaN or infinity.

    """
    values = np.asarray(planes, dtype=np.float64)
    if values.ndim == 2:
        values = values[np.newaxis]
    if not np.all(np.isfinite(values)):
        raise errors.NonFinite('cannot normalize non-finite data')
    if spec.variant == config.NormVariant.DATASET2_TANH:
        return np.stack([_tanh(plane, spec.tanh_scale) for plane in values])
    return np.stack([_minmax(plane, spec) for plane in values])


def _minmax(plane: np.ndarray, spec: config.NormalizationSpec) -> np.ndarray:
    if spec.minmax_mode == config.MinMaxMode.GLOBAL_FROM_CONFIG:
        low = typing.cast(float, spec.global_min)
        high = typing.cast(float, spec.global_max)
    else:
        low, high = float(plane.min()), float(plane.max())
    if high <= low:
        LOGGER.warning(
            'Constant plane (%g) under min-max normalization, mapping to 0',
            low,
        )
        return np.zeros_like(plane)
    unit = np.clip((plane - low) / (high - low), 0.0, 1.0)
    return typing.cast(np.ndarray, unit * 2 - 1)


def _tanh(plane: np.ndarray, scale: float) -> np.ndarray:
    median = float(np.median(plane))
    mad = float(np.median(np.abs(plane - median)))
    squashed = np.tanh((plane - median) / (scale * mad + TANH_EPSILON))
    return np.clip(squashed, -_OPEN_UNIT, _OPEN_UNIT)


def prepare_sar(
    tile: models.ImageTile,
    sar: config.SarConfig,
    norm: config.NormalizationSpec,
) -> np.ndarray:
    """Composite, blur and normalize a SAR tile."""
    if sar.db_input:
        LOGGER.debug('SAR input declared as dB; values used unchanged')
    composite = synthesize_3ch(
        tile.band(sar.bands[0]),
        tile.band(sar.bands[1]),
        sar.recipe,
        sar.custom_expr,
    )
    blurred = np.stack(
        [median_blur(plane, sar.median_k) for plane in composite.channels]
    )
    return normalize(blurred, norm)


EO_TARGET_SPEC = config.NormalizationSpec(
    minmax_mode=config.MinMaxMode.GLOBAL_FROM_CONFIG,
    global_min=0.0,
    global_max=255.0,
)


def prepare_eo(rgb: models.ImageTile) -> np.ndarray:
    """Map an 8-bit EO composite linearly onto [-1, 1]."""
    return normalize(rgb.pixels.astype(np.float64), EO_TARGET_SPEC)


def preview(planes: np.ndarray) -> np.ndarray:
    """8-bit rendering of [-1, 1] data: linear map onto [0, 255]."""
    scaled = np.rint((np.clip(planes, -1.0, 1.0) + 1) / 2 * 255)
    return scaled.astype(np.uint8)


def write_prepared(
    planes: np.ndarray, stem: pathlib.Path
) -> tuple[pathlib.Path, pathlib.Path]:
    """Write a float32 TIFF and an 8-bit PNG preview next to each other."""
    tiff = stem.with_suffix('.tif')
    png = stem.with_suffix('.png')
    catalog.write_tile(tiff, planes.astype(np.float32))
    catalog.write_tile(png, preview(planes))
    return tiff, png
