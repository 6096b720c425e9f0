import concurrent.futures
import functools
import logging
import pathlib
import time
import typing

import numpy as np
import pydantic

from eo_curator import (
    bridge,
    catalog,
    config,
    errors,
    evaluation,
    features,
    filters,
    manifests,
    models,
    pairing,
    sarprep,
    scoring,
)

LOGGER = logging.getLogger(__name__)

Model = typing.TypeVar('Model', bound=pydantic.BaseModel)
Result = typing.TypeVar('Result')

STAGES = ('ingest', 'filter', 'score', 'pair', 'prep', 'translate', 'eval')

_MANIFESTS: dict[str, tuple[str, type[pydantic.BaseModel]]] = {
    'ingest': (manifests.CATALOG, models.CatalogManifest),
    'filter': (manifests.FILTER, models.FilterManifest),
    'score': (manifests.SCORE, models.ScoreManifest),
    'pair': (manifests.PAIRS, models.PairManifest),
    'prep': (manifests.PREP, models.PrepManifest),
    'translate': (manifests.TRANSLATE, models.BridgeLog),
}


def select_stages(
    cfg: config.PipelineConfig,
    stage_from: str | None = None,
    stage_to: str | None = None,
) -> tuple[str, ...]:
    """Contiguous run of stages between two names, inclusive.

    Without an explicit end the run stops after ``prep`` unless a bridge
    command is configured.

    """
    default_end = 'eval' if cfg.bridge.command else 'prep'
    first, last = stage_from or STAGES[0], stage_to or default_end
    for name in (first, last):
        if name not in STAGES:
            raise errors.ConfigError(f'Unknown stage {name!r}')
    start, stop = STAGES.index(first), STAGES.index(last)
    if start > stop:
        raise errors.ConfigError(f'{first} runs after {last}')
    return STAGES[start : stop + 1]


class Pipeline:
    """Run the curation stages for one configuration.

    Every stage reads the manifests of the stages before it from the
    output directory and writes its own manifest plus a timing report, so
    stages can be rerun independently.

    """

    def __init__(self, cfg: config.PipelineConfig) -> None:
        self.config = cfg
        self.out_dir = cfg.run.out
        self.fingerprint = cfg.fingerprint

    def run(
        self, stages: typing.Sequence[str] = STAGES, resume: bool = False
    ) -> list[str]:
        """Execute stages in pipeline order.

        Args:
            stages: stage names to run
            resume: skip a stage whose manifest already carries the current
                configuration fingerprint

        Returns:
            the names of the stages that ran

        """
        unknown = set(stages) - set(STAGES)
        if unknown:
            raise errors.ConfigError(f'Unknown stages {sorted(unknown)}')
        ran = []
        for stage in (name for name in STAGES if name in stages):
            if resume and self._is_current(stage):
                LOGGER.info('Skipping %s, manifest is current', stage)
                continue
            getattr(self, stage)()
            ran.append(stage)
        return ran

    def ingest(self) -> models.CatalogManifest:
        """Load the scene catalog named in ``[paths]``."""
        if self.config.paths.catalog is None:
            raise errors.ConfigError('paths.catalog is not set')
        started = time.perf_counter()
        records = catalog.load_catalog(self.config.paths.catalog)
        manifest = models.CatalogManifest(
            config_fingerprint=self.fingerprint, records=records
        )
        self._write(manifests.CATALOG, manifest)
        self._report('ingest', len(records), len(records), {}, started)
        return manifest

    def filter(self) -> models.FilterManifest:
        """Stages 1 and 2 over every EO scene."""
        records = self._eo_records()
        started = time.perf_counter()
        verdicts = self._map(
            'filter',
            functools.partial(filters.evaluate_eo_scene, cfg=self.config),
            records,
        )
        manifest = models.FilterManifest(
            config_fingerprint=self.fingerprint,
            verdicts=sorted(verdicts, key=lambda v: v.scene_id),
        )
        self._write(manifests.FILTER, manifest)
        self._write_report(
            models.StageReport.from_verdicts(
                'filter', manifest.verdicts, time.perf_counter() - started
            )
        )
        return manifest

    def score(self) -> models.ScoreManifest:
        """Stage 3: score stage-2 survivors against the cloud reference."""
        stage3 = self.config.stage3
        by_id = {r.scene_id: r for r in self._eo_records()}
        filtered = self._read(manifests.FILTER, models.FilterManifest)
        survivors = sorted(v.scene_id for v in filtered.verdicts if v.kept)
        reference_ids = self._reference_ids()
        started = time.perf_counter()

        needed = sorted(set(survivors) | set(reference_ids))
        if stage3.extractor == config.Extractor.EXTERNAL_FEATURES:
            extractor_id = 'external'
            table = self._feature_table()
            partials = [
                scoring.external_accumulator(table, scene_id)
                for scene_id in needed
            ]
        else:
            extractor_id = features.EXTRACTOR_ID
            missing = [s for s in needed if s not in by_id]
            if missing:
                raise errors.UnknownScene(
                    f'not in the catalog: {", ".join(missing)}'
                )
            partials = self._map(
                'score',
                functools.partial(
                    scoring.scene_accumulator,
                    rgb=self.config.rgb,
                    patch_size=stage3.patch_size,
                ),
                [by_id[scene_id] for scene_id in needed],
            )
        accumulators = dict(zip(needed, partials, strict=True))
        reference = scoring.pool(accumulators[s] for s in reference_ids)

        verdicts: list[models.FilterVerdict] = []
        entries: list[models.ScoreEntry] = []
        literal: float | None = None
        interpolated: float | None = None
        if survivors:
            verdicts, entries, literal, interpolated = scoring.score_tiles(
                {s: accumulators[s].finalize() for s in survivors},
                reference,
                stage3,
                extractor_id,
            )
        else:
            LOGGER.warning('No tiles survived stage 2, nothing to score')
        manifest = models.ScoreManifest(
            config_fingerprint=self.fingerprint,
            extractor_id=extractor_id,
            threshold_form=stage3.threshold_form.value,
            beta=stage3.beta,
            reference_count=len(reference_ids),
            f_th_literal=literal,
            f_th_interp=interpolated,
            verdicts=verdicts,
        )
        self._write(manifests.SCORE, manifest)
        manifests.write_models(self.out_dir / manifests.SCORE_REPORT, entries)
        self._write_report(
            models.StageReport.from_verdicts(
                'score', verdicts, time.perf_counter() - started
            )
        )
        return manifest

    def pair(self) -> models.PairManifest:
        """Pair every clean EO scene with nearby SAR acquisitions."""
        records = self._read(manifests.CATALOG, models.CatalogManifest).records
        filtered = self._read(manifests.FILTER, models.FilterManifest)
        scored = self._read(manifests.SCORE, models.ScoreManifest)
        started = time.perf_counter()
        clean = {v.scene_id for v in scored.verdicts if v.kept}
        dropped: dict[str, int] = {}
        for verdict in (*filtered.verdicts, *scored.verdicts):
            if not verdict.kept:
                rule = verdict.rule.value
                dropped[rule] = dropped.get(rule, 0) + 1
        counts = models.StageCounts(
            input=len(filtered.verdicts),
            kept=len(clean),
            dropped=dict(sorted(dropped.items())),
        )
        manifest = pairing.build_pairs(
            [r for r in records if r.scene_id in clean],
            [r for r in records if r.sensor == models.Sensor.SAR],
            self.config.pair.window_days,
            self.config.pair.max_pairs_per_eo,
            counts,
            self.fingerprint,
        )
        self._write(manifests.PAIRS, manifest)
        manifests.write_text_atomic(
            self.out_dir / manifests.PAIRS_CSV, pairing.to_csv(manifest)
        )
        paired = len({pair.eo_scene_id for pair in manifest.pairs})
        self._report(
            'pair',
            len(clean),
            paired,
            {'Unpaired': len(clean) - paired} if len(clean) > paired else {},
            started,
        )
        return manifest

    def prep(self) -> models.PrepManifest:
        """Preprocess the SAR inputs and EO targets of every pair."""
        records = self._read(manifests.CATALOG, models.CatalogManifest).records
        pairs = self._read(manifests.PAIRS, models.PairManifest)
        wanted = {p.sar_scene_id for p in pairs.pairs} | {
            p.eo_scene_id for p in pairs.pairs
        }
        selected = sorted(
            (r for r in records if r.scene_id in wanted),
            key=lambda r: (r.sensor.value, r.scene_id),
        )
        started = time.perf_counter()
        outputs = self._map(
            'prep',
            functools.partial(
                prepare_scene, cfg=self.config, out_dir=self.out_dir
            ),
            selected,
        )
        manifest = models.PrepManifest(
            config_fingerprint=self.fingerprint, outputs=outputs
        )
        self._write(manifests.PREP, manifest)
        self._report('prep', len(selected), len(outputs), {}, started)
        return manifest

    def translate(self) -> models.BridgeLog:
        """Hand the prepared SAR inputs to the configured external model."""
        if self.config.bridge.command is None:
            raise errors.ConfigError('bridge.command is not set')
        pairs = self._read(manifests.PAIRS, models.PairManifest)
        prepared = self._read(manifests.PREP, models.PrepManifest)
        started = time.perf_counter()
        use_png = self.config.bridge.input_format == config.InputFormat.PNG
        inputs, targets = {}, {}
        for output in prepared.outputs:
            if output.sensor == models.Sensor.SAR:
                chosen = output.png if use_png else output.tiff
                inputs[output.scene_id] = self.out_dir / chosen
            else:
                targets[output.scene_id] = self.out_dir / output.png
        log = bridge.bridge_translate(
            pairs,
            inputs,
            self.config.bridge.command,
            self.out_dir / 'translate',
            self.config.bridge.timeout,
            targets,
        )
        self._write(manifests.TRANSLATE, log)
        self._report(
            'translate', len(log.inputs), len(log.outputs), {}, started
        )
        return log

    def eval(self) -> models.EvalReport:
        """Best-match evaluation over the configured or bridged mapping."""
        settings = self.config.eval
        workdir = self.out_dir / 'translate'
        mapping = settings.mapping or workdir / bridge.MAPPING
        if not mapping.is_file():
            raise errors.MissingUpstreamManifest(
                f'{mapping} not found; run translate or set eval.mapping'
            )
        started = time.perf_counter()
        report = evaluation.evaluate_mapping(
            mapping,
            settings.outputs or workdir / 'out',
            settings.references or self.out_dir / 'prep' / 'eo',
            settings.norm,
        )
        self._write(manifests.EVAL, report)
        count = len(report.per_reference)
        self._report('eval', count, count, {}, started)
        return report

    def report(self) -> list[models.StageReport]:
        """Stage reports present in the output directory, in stage order."""
        reports = []
        for stage in STAGES:
            path = self.out_dir / manifests.REPORTS / f'{stage}.json'
            if path.exists():
                reports.append(manifests.read_model(path, models.StageReport))
        return reports

    def _eo_records(self) -> list[models.SceneRecord]:
        records = self._read(manifests.CATALOG, models.CatalogManifest).records
        return [r for r in records if r.sensor == models.Sensor.EO]

    def _reference_ids(self) -> list[str]:
        path = self.config.paths.cloud_subset
        if path is None:
            raise errors.ConfigError('paths.cloud_subset is not set')
        try:
            lines = path.read_text(encoding='utf-8').splitlines()
        except OSError as error:
            raise errors.MalformedCatalog(
                f'Cannot read {path}: {error}'
            ) from error
        return sorted({line.strip() for line in lines if line.strip()})

    def _feature_table(self) -> dict[str, np.ndarray]:
        paths = self.config.paths
        if paths.external_features is None or paths.external_index is None:
            raise errors.ConfigError(
                'ExternalFeatures needs paths.external_features and '
                'paths.external_index'
            )
        return features.read_feature_file(
            paths.external_features, paths.external_index
        )

    def _map(
        self,
        stage: str,
        function: typing.Callable[[models.SceneRecord], Result],
        records: typing.Sequence[models.SceneRecord],
    ) -> list[Result]:
        """Apply ``function`` per scene, in input order, on the worker pool"""
        task = functools.partial(_guarded, stage, function)
        workers = self.config.run.workers
        if workers == 1 or len(records) < 2:
            return [task(record) for record in records]
        LOGGER.debug(
            '%s: %i scenes on %i workers', stage, len(records), workers
        )
        chunksize = max(1, len(records) // (workers * 4))
        with concurrent.futures.ProcessPoolExecutor(workers) as pool:
            return list(pool.map(task, records, chunksize=chunksize))

    def _read(self, name: str, model: type[Model]) -> Model:
        manifest = manifests.read_model(self.out_dir / name, model)
        recorded = getattr(manifest, 'config_fingerprint', self.fingerprint)
        if recorded != self.fingerprint:
            LOGGER.warning(
                '%s was written under a different configuration', name
            )
        return manifest

    def _write(self, name: str, model: pydantic.BaseModel) -> None:
        manifests.write_model(self.out_dir / name, model)

    def _is_current(self, stage: str) -> bool:
        if stage not in _MANIFESTS:
            return False
        name, model = _MANIFESTS[stage]
        try:
            manifest = manifests.read_model(self.out_dir / name, model)
        except errors.MissingUpstreamManifest:
            return False
        return getattr(manifest, 'config_fingerprint', None) == (
            self.fingerprint
        )

    def _report(
        self,
        stage: str,
        total: int,
        kept: int,
        dropped: dict[str, int],
        started: float,
    ) -> None:
        elapsed = time.perf_counter() - started
        self._write_report(
            models.StageReport(
                stage=stage,
                input=total,
                kept=kept,
                dropped=dropped,
                wall_time=elapsed,
                throughput=total / elapsed if elapsed > 0 else 0.0,
            )
        )

    def _write_report(self, report: models.StageReport) -> None:
        manifests.write_model(
            self.out_dir / manifests.REPORTS / f'{report.stage}.json', report
        )
        LOGGER.info(
            '%s: %i in, %i kept, dropped %s (%.2fs, %.1f scenes/s)',
            report.stage,
            report.input,
            report.kept,
            report.dropped or '-',
            report.wall_time,
            report.throughput,
        )


def _guarded(
    stage: str,
    function: typing.Callable[[models.SceneRecord], Result],
    record: models.SceneRecord,
) -> Result:
    try:
        return function(record)
    except errors.StageFailure:
        raise
    except errors.DataError as error:
        raise errors.StageFailure(stage, record.scene_id, str(error)) from (
            error
        )


def prepare_scene(
    record: models.SceneRecord,
    cfg: config.PipelineConfig,
    out_dir: pathlib.Path,
) -> models.PrepOutput:
    """Preprocess one SAR input or EO target and write it under ``prep/``."""
    tile = catalog.load_tile(record)
    if record.sensor == models.Sensor.SAR:
        planes = sarprep.prepare_sar(tile, cfg.sar, cfg.norm)
        folder = 'sar'
    else:
        planes = sarprep.prepare_eo(
            filters.to_rgb8(tile, cfg.rgb.bands, cfg.rgb.scale)
        )
        folder = 'eo'
    tiff, png = sarprep.write_prepared(
        planes, out_dir / 'prep' / folder / record.scene_id
    )
    LOGGER.debug('Prepared %s', record.scene_id)
    return models.PrepOutput(
        scene_id=record.scene_id,
        sensor=record.sensor,
        tiff=tiff.relative_to(out_dir).as_posix(),
        png=png.relative_to(out_dir).as_posix(),
        sha256=manifests.sha256_file(tiff),
    )
