"""``eo-curator`` command line.

Each pipeline stage is a subcommand; ``run`` chains a range of them.
Logging and the human-readable summaries go to standard error, JSON
results to standard output.

"""

import argparse
import json
import logging
import pathlib
import sys
import typing

from eo_curator import config, errors, synth, version
from eo_curator import main as pipeline

LOGGER = logging.getLogger(__name__)

Handler = typing.Callable[[argparse.Namespace], int]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        '--config', type=pathlib.Path, help='pipeline configuration (TOML)'
    )
    common.add_argument(
        '--workers', type=int, help='worker processes (overrides [run])'
    )
    common.add_argument(
        '--out', type=pathlib.Path, help='output directory (overrides [run])'
    )
    common.add_argument(
        '-v', '--verbose', action='store_true', help='log per-scene detail'
    )

    parser = argparse.ArgumentParser(
        prog='eo-curator',
        description='Curate paired SAR and EO training data',
    )
    parser.add_argument(
        '--version', action='version', version=f'%(prog)s {version}'
    )
    commands = parser.add_subparsers(dest='command', required=True)

    stages: dict[str, tuple[str, Handler]] = {
        'ingest': ('load the scene catalog', _stage('ingest')),
        'filter': ('QA, brightness and no-data filters', _stage('filter')),
        'score': ('score tiles against the cloud subset', _stage('score')),
        'pair': ('pair clean EO scenes with SAR scenes', _stage('pair')),
        'prep': ('preprocess the paired scenes', _stage('prep')),
        'translate': ('run the external model', _stage('translate')),
    }
    for name, (summary, handler) in stages.items():
        command = commands.add_parser(name, parents=[common], help=summary)
        command.set_defaults(handler=handler)

    command = commands.add_parser(
        'eval', parents=[common], help='best-match evaluation'
    )
    command.add_argument('--mapping', type=pathlib.Path)
    command.add_argument('--outputs', type=pathlib.Path)
    command.add_argument('--references', type=pathlib.Path)
    command.add_argument(
        '--norm', choices=[norm.value for norm in config.DistanceNorm]
    )
    command.add_argument(
        '--json', type=pathlib.Path, help='write the report here, not stdout'
    )
    command.set_defaults(handler=_evaluate)

    command = commands.add_parser(
        'run', parents=[common], help='run a range of stages'
    )
    command.add_argument('--stage-from', choices=pipeline.STAGES)
    command.add_argument('--stage-to', choices=pipeline.STAGES)
    command.add_argument(
        '--resume',
        action='store_true',
        help='skip stages whose manifest matches the configuration',
    )
    command.set_defaults(handler=_run)

    command = commands.add_parser(
        'report', parents=[common], help='print the stage reports'
    )
    command.set_defaults(handler=_report)

    command = commands.add_parser(
        'synth', help='generate a labelled synthetic corpus'
    )
    command.add_argument('--spec', type=pathlib.Path)
    command.add_argument('--out', type=pathlib.Path, required=True)
    command.add_argument('--seed', type=int)
    command.add_argument('-v', '--verbose', action='store_true')
    command.set_defaults(handler=_synth)
    return parser


def main(argv: typing.Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
        stream=sys.stderr,
    )
    try:
        return typing.cast(int, args.handler(args))
    except errors.CuratorError as error:
        LOGGER.error('%s', error)
        return error.exit_code


def _load(args: argparse.Namespace) -> config.PipelineConfig:
    cfg = config.load(args.config)
    return cfg.with_run(workers=args.workers, out=args.out)


def _stage(name: str) -> Handler:
    def handler(args: argparse.Namespace) -> int:
        pipeline.Pipeline(_load(args)).run([name])
        return 0

    return handler


def _run(args: argparse.Namespace) -> int:
    cfg = _load(args)
    stages = pipeline.select_stages(cfg, args.stage_from, args.stage_to)
    ran = pipeline.Pipeline(cfg).run(stages, resume=args.resume)
    LOGGER.info('Ran %s', ', '.join(ran) or 'nothing')
    return 0


def _evaluate(args: argparse.Namespace) -> int:
    cfg = _load(args)
    overrides = {
        'mapping': args.mapping,
        'outputs': args.outputs,
        'references': args.references,
        'norm': args.norm,
    }
    updates = {k: v for k, v in overrides.items() if v is not None}
    if updates:
        cfg = cfg.replace_section('eval', **updates)
    report = pipeline.Pipeline(cfg).eval()
    text = report.model_dump_json(indent=2)
    if args.json is not None:
        args.json.write_text(text + '\n', encoding='utf-8')
    else:
        sys.stdout.write(text + '\n')
    return 0


def _report(args: argparse.Namespace) -> int:
    reports = pipeline.Pipeline(_load(args)).report()
    if not reports:
        LOGGER.warning('No stage reports found')
    for report in reports:
        LOGGER.info(
            '%-9s %6i in %6i kept %s',
            report.stage,
            report.input,
            report.kept,
            ' '.join(f'{k}={v}' for k, v in report.dropped.items()),
        )
    payload = [report.model_dump(mode='json') for report in reports]
    sys.stdout.write(json.dumps(payload, indent=2) + '\n')
    return 0


def _synth(args: argparse.Namespace) -> int:
    spec = synth.load_spec(args.spec, seed=args.seed)
    labels = synth.generate(spec, args.out)
    LOGGER.info('Wrote %i labelled EO scenes', len(labels.labels))
    return 0
