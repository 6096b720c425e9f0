"""Manifest files: the only contract between pipeline stages.

Writes go to a temporary file in the destination directory which is then
renamed over the target, so an interrupted stage never leaves a partial
manifest behind.

"""

import hashlib
import json
import logging
import os
import pathlib
import tempfile
import typing

import pydantic

from eo_curator import errors

LOGGER = logging.getLogger(__name__)

Model = typing.TypeVar('Model', bound=pydantic.BaseModel)

CATALOG = 'catalog.json'
FILTER = 'filter.json'
SCORE = 'score.json'
SCORE_REPORT = 'score_report.json'
PAIRS = 'pairs.json'
PAIRS_CSV = 'pairs.csv'
PREP = 'prep.json'
TRANSLATE = 'translate.json'
EVAL = 'eval.json'
REPORTS = 'reports'


def write_text_atomic(path: pathlib.Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    handle = tempfile.NamedTemporaryFile(
        'w',
        encoding='utf-8',
        dir=path.parent,
        prefix=f'.{path.name}.',
        suffix='.tmp',
        delete=False,
    )
    try:
        with handle:
            handle.write(text)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(handle.name, path)
    except BaseException:
        pathlib.Path(handle.name).unlink(missing_ok=True)
        raise


def write_model(path: pathlib.Path, model: pydantic.BaseModel) -> None:
    write_text_atomic(path, model.model_dump_json(indent=2, by_alias=True))
    LOGGER.debug('Wrote %s', path)


def write_models(
    path: pathlib.Path, items: typing.Sequence[pydantic.BaseModel]
) -> None:
    """Write a JSON array of models."""
    payload = [item.model_dump(mode='json', by_alias=True) for item in items]
    write_text_atomic(path, json.dumps(payload, indent=2))


def read_model(path: pathlib.Path, model: type[Model]) -> Model:
    """Load an upstream manifest.

    Raises:
        MissingUpstreamManifest: the file does not exist or does not
            validate as ``model``.

    """
    try:
        return model.model_validate_json(path.read_bytes())
    except FileNotFoundError as error:
        raise errors.MissingUpstreamManifest(
            f'{path.name} not found in {path.parent}; run the upstream '
            'stage first'
        ) from error
    except pydantic.ValidationError as error:
        raise errors.MissingUpstreamManifest(
            f'{path} is not a valid {model.__name__}: {error}'
        ) from error


def sha256_file(path: pathlib.Path) -> str:
    digest = hashlib.sha256()
    with path.open('rb') as handle:
        for block in iter(lambda: handle.read(1 << 20), b''):
            digest.update(block)
    return digest.hexdigest()
