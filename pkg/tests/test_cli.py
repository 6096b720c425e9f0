import contextlib
import io
import json
import pathlib
import shlex
import sys
import tempfile
import unittest

import numpy as np

from eo_curator import catalog, cli, manifests


class CliTestCase(unittest.TestCase):
    def setUp(self) -> None:
        self.tempdir = tempfile.TemporaryDirectory()
        self.addCleanup(self.tempdir.cleanup)
        self.root = pathlib.Path(self.tempdir.name)
        self.corpus = self.root / 'corpus'
        self.config = self.corpus / 'pipeline.toml'

    def invoke(self, *argv: str) -> tuple[int, str]:
        stdout = io.StringIO()
        with contextlib.redirect_stdout(stdout):
            code = cli.main(list(argv))
        return code, stdout.getvalue()

    def synth(self) -> None:
        code, _ = self.invoke('synth', '--out', str(self.corpus))
        self.assertEqual(code, 0)

    def test_synth_then_run(self) -> None:
        self.synth()
        self.assertTrue(self.config.is_file())
        code, _ = self.invoke('run', '--config', str(self.config))
        self.assertEqual(code, 0)
        out = self.corpus / 'out'
        for name in (
            manifests.CATALOG,
            manifests.FILTER,
            manifests.SCORE,
            manifests.PAIRS,
            manifests.PREP,
        ):
            self.assertTrue((out / name).is_file(), name)
        code, text = self.invoke('report', '--config', str(self.config))
        self.assertEqual(code, 0)
        self.assertEqual(
            [report['stage'] for report in json.loads(text)],
            ['ingest', 'filter', 'score', 'pair', 'prep'],
        )

    def test_single_stage_and_out_override(self) -> None:
        self.synth()
        elsewhere = self.root / 'elsewhere'
        code, _ = self.invoke(
            'ingest', '--config', str(self.config), '--out', str(elsewhere)
        )
        self.assertEqual(code, 0)
        self.assertTrue((elsewhere / manifests.CATALOG).is_file())
        self.assertFalse((self.corpus / 'out').exists())

    def test_stage_range(self) -> None:
        self.synth()
        code, _ = self.invoke(
            'run', '--config', str(self.config), '--stage-to', 'filter'
        )
        self.assertEqual(code, 0)
        out = self.corpus / 'out'
        self.assertTrue((out / manifests.FILTER).is_file())
        self.assertFalse((out / manifests.SCORE).exists())

    def test_config_error_exit_code(self) -> None:
        code, _ = self.invoke(
            'ingest', '--config', str(self.root / 'absent.toml')
        )
        self.assertEqual(code, 2)

    def test_invalid_worker_count(self) -> None:
        self.synth()
        for workers in ('0', '-1'):
            with self.subTest(workers=workers):
                code, _ = self.invoke(
                    'filter',
                    '--config',
                    str(self.config),
                    '--workers',
                    workers,
                )
                self.assertEqual(code, 2)
        self.assertFalse((self.corpus / 'out').exists())

    def test_data_error_exit_code(self) -> None:
        self.synth()
        code, _ = self.invoke('score', '--config', str(self.config))
        self.assertEqual(code, 3)

    def test_external_command_exit_code(self) -> None:
        self.synth()
        self.assertEqual(
            self.invoke('run', '--config', str(self.config))[0], 0
        )
        command = (
            f'{shlex.quote(sys.executable)} -c "import sys; sys.exit(1)" '
            '{in_dir} {out_dir}'
        )
        with self.config.open('a', encoding='utf-8') as handle:
            handle.write(f"\n[bridge]\ncommand = '{command}'\n")
        code, _ = self.invoke('translate', '--config', str(self.config))
        self.assertEqual(code, 4)

    def test_eval_writes_json(self) -> None:
        outputs = self.root / 'outputs'
        references = self.root / 'references'
        for folder, value in ((outputs, 0), (references, 51)):
            folder.mkdir()
            catalog.write_tile(
                folder / 'a.png', np.full((3, 4, 4), value, np.uint8)
            )
        mapping = self.root / 'mapping.csv'
        mapping.write_text(
            'q,output,a.png\nq,reference,a.png\n', encoding='utf-8'
        )
        report = self.root / 'eval.json'
        arguments = [
            'eval',
            '--mapping',
            str(mapping),
            '--outputs',
            str(outputs),
            '--references',
            str(references),
            '--out',
            str(self.root / 'out'),
        ]
        code, text = self.invoke(*arguments, '--json', str(report))
        self.assertEqual(code, 0)
        self.assertEqual(text, '')
        self.assertAlmostEqual(
            json.loads(report.read_text(encoding='utf-8'))['total'], 0.2
        )
        code, text = self.invoke(*arguments, '--norm', 'meansq')
        self.assertEqual(code, 0)
        self.assertAlmostEqual(json.loads(text)['total'], 0.04)

    def test_eval_of_undecodable_output(self) -> None:
        (self.root / 'a.png').write_bytes(b'')
        mapping = self.root / 'mapping.csv'
        mapping.write_text(
            'q,output,a.png\nq,reference,a.png\n', encoding='utf-8'
        )
        code, _ = self.invoke(
            'eval',
            '--mapping',
            str(mapping),
            '--outputs',
            str(self.root),
            '--references',
            str(self.root),
            '--out',
            str(self.root / 'out'),
        )
        self.assertEqual(code, 3)

    def test_eval_of_repeated_reference(self) -> None:
        catalog.write_tile(
            self.root / 'a.png', np.zeros((3, 4, 4), dtype=np.uint8)
        )
        mapping = self.root / 'mapping.csv'
        mapping.write_text(
            'q,output,a.png\nq,reference,a.png\nq,reference,a.png\n',
            encoding='utf-8',
        )
        code, _ = self.invoke(
            'eval',
            '--mapping',
            str(mapping),
            '--outputs',
            str(self.root),
            '--references',
            str(self.root),
            '--out',
            str(self.root / 'out'),
        )
        self.assertEqual(code, 3)

    def test_usage_error(self) -> None:
        with contextlib.redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit) as context:
                cli.main(['filter', '--workers', 'many'])
        self.assertEqual(context.exception.code, 2)
