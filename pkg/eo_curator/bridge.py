"""File-contract bridge to external translation models.

The model is any command line program. Preprocessed SAR inputs are
copied into ``in_dir`` as ``<scene_id><suffix>``; the command is run once
with ``{in_dir}`` and ``{out_dir}`` substituted and must write one file
of the same name into ``out_dir`` for every input.

"""

import csv
import io
import logging
import pathlib
import shlex
import shutil
import subprocess
import typing

from eo_curator import errors, manifests, models

LOGGER = logging.getLogger(__name__)

MAPPING = 'eval_mapping.csv'


def bridge_translate(
    pairs: models.PairManifest,
    inputs: typing.Mapping[str, pathlib.Path],
    command: str,
    workdir: pathlib.Path,
    timeout: float | None = None,
    eo_targets: typing.Mapping[str, pathlib.Path] | None = None,
) -> models.BridgeLog:
    """Run an external model over the SAR scenes of a pair manifest.

    Args:
        pairs: accepted pairs; every distinct SAR scene becomes one input
        inputs: preprocessed file for each SAR scene id
        command: template containing ``{in_dir}`` and ``{out_dir}``
        workdir: directory receiving ``in/``, ``out/`` and the mapping
        timeout: seconds before the command is abandoned
        eo_targets: EO target image per EO scene id; when given an
            ``eval_mapping.csv`` grouping each target with the outputs of
            its paired SAR scenes is written to ``workdir``

    Raises:
        CommandFailed: the command could not start, timed out or exited
            non-zero.
        IncompleteOutputs: an expected output file is missing.

    """
    if '{in_dir}' not in command or '{out_dir}' not in command:
        raise errors.ConfigError('command needs {in_dir} and {out_dir}')
    in_dir, out_dir = workdir / 'in', workdir / 'out'
    for directory in (in_dir, out_dir):
        shutil.rmtree(directory, ignore_errors=True)
        directory.mkdir(parents=True)

    names: dict[str, str] = {}
    staged = []
    for scene_id in sorted({pair.sar_scene_id for pair in pairs.pairs}):
        try:
            source = inputs[scene_id]
        except KeyError as error:
            raise errors.UnknownScene(
                f'no preprocessed input for {scene_id}'
            ) from error
        names[scene_id] = f'{scene_id}{source.suffix}'
        target = in_dir / names[scene_id]
        shutil.copyfile(source, target)
        staged.append(_checksum(scene_id, target))

    arguments = [
        part.format(in_dir=in_dir, out_dir=out_dir)
        for part in shlex.split(command)
    ]
    LOGGER.info('Running %s on %i inputs', arguments[0], len(staged))
    try:
        result = subprocess.run(  # noqa: S603
            arguments,
            capture_output=True,
            text=True,
            timeout=timeout,
            check=False,
        )
    except FileNotFoundError as error:
        raise errors.CommandFailed(127, str(error)) from error
    except subprocess.TimeoutExpired as error:
        raise errors.CommandFailed(-1, f'timed out after {timeout}s') from (
            error
        )
    output = (result.stdout or '') + (result.stderr or '')
    if result.returncode != 0:
        raise errors.CommandFailed(result.returncode, output)

    missing = [
        scene_id
        for scene_id, name in names.items()
        if not (out_dir / name).is_file()
    ]
    if missing:
        raise errors.IncompleteOutputs(missing)
    produced = [
        _checksum(scene_id, out_dir / name) for scene_id, name in names.items()
    ]

    mapping = None
    if eo_targets is not None:
        mapping = workdir / MAPPING
        manifests.write_text_atomic(
            mapping, _mapping_csv(pairs, names, eo_targets)
        )
    return models.BridgeLog(
        config_fingerprint=pairs.config_fingerprint,
        command=arguments,
        returncode=result.returncode,
        output=output,
        inputs=staged,
        outputs=produced,
        mapping=mapping.name if mapping else None,
    )


def _checksum(scene_id: str, path: pathlib.Path) -> models.FileChecksum:
    return models.FileChecksum(
        scene_id=scene_id, path=path.name, sha256=manifests.sha256_file(path)
    )


def _mapping_csv(
    pairs: models.PairManifest,
    names: typing.Mapping[str, str],
    eo_targets: typing.Mapping[str, pathlib.Path],
) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(('query_key', 'role', 'path'))
    grouped: dict[str, list[str]] = {}
    for pair in pairs.pairs:
        grouped.setdefault(pair.eo_scene_id, []).append(pair.sar_scene_id)
    for eo_scene_id in sorted(grouped):
        for sar_scene_id in grouped[eo_scene_id]:
            writer.writerow((eo_scene_id, 'output', names[sar_scene_id]))
        writer.writerow(
            (eo_scene_id, 'reference', eo_targets[eo_scene_id].name)
        )
    return buffer.getvalue()
