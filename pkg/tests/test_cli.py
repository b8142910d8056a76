#!/usr/bin/env python3
"""
Test the command line, run configuration, manifests and exports
"""
import csv
import json
import unittest
import sys
import os
import tempfile
from pathlib import Path

# Add the repository root to the Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.cli import main
from src.commands import EXIT_RUNTIME, EXIT_VALIDATION, failure
from src.commands.gradcheck import miniature_gradcheck
from src.exceptions import ConfigError, NonFiniteGradientError, ParseError
from src.export_manager import export_manager
from src.run_manifest import RunConfig, load_manifest, manifest_path, resolve_run_config, write_manifest
from src.scenario_storage import scenario_storage

TINY_SETTINGS = """\
# tiny pipeline
scenario.frames=16
scenario.fps=5
scenario.grid_size=8
scenario.token_length=12
model.grid_size=8
model.feature_size=2
model.channels=4
model.lift_channels=4
model.reduction=2
model.hidden_size=3
model.bases=2
model.levels=2
train.epochs=1
train.warmup_epochs=1
train.val_fraction=0.34
"""


class TestCommandLine(unittest.TestCase):
    """Dispatch and exit codes"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        self.settings = self.root / 'tiny.env'
        self.settings.write_text(TINY_SETTINGS, encoding='utf-8')

    def tearDown(self):
        self.tmp.cleanup()

    def cli(self, *args):
        return main(list(args) + ['--config', str(self.settings), '--no-progress'])

    def test_usage_errors(self):
        self.assertEqual(main([]), EXIT_VALIDATION)
        self.assertEqual(main(['gen', '--bogus']), EXIT_VALIDATION)
        self.assertEqual(main(['gen', '--no-progress']), EXIT_VALIDATION)

    def test_invalid_configuration(self):
        out = str(self.root / 'data.cams')
        self.assertEqual(self.cli('gen', '--out', out, '--frames', '6'), EXIT_VALIDATION)
        self.assertFalse(os.path.exists(out))

    def test_missing_input_file(self):
        self.assertEqual(self.cli('train', '--data', str(self.root / 'none.cams'),
                                  '--out', str(self.root / 'm.camr')), EXIT_RUNTIME)

    def test_gen_writes_data_and_manifest(self):
        out = self.root / 'data.cams'
        self.assertEqual(self.cli('gen', '--seed', '7', '--count', '4', '--out', str(out)), 0)
        sequences = scenario_storage.load(out)
        self.assertEqual(len(sequences), 4)
        self.assertEqual(sequences[0].grid_levels.shape[1:3], (8, 8))
        manifest = json.loads(manifest_path(out).read_text(encoding='utf-8'))
        self.assertEqual(manifest['run']['seed'], 7)
        self.assertEqual(manifest['run']['scenario']['grid_size'], 8)
        self.assertIn(out.as_posix(), manifest['artifacts'])

    def test_manifest_replay_is_byte_identical(self):
        out = self.root / 'data.cams'
        self.assertEqual(self.cli('gen', '--seed', '3', '--count', '3', '--out', str(out)), 0)
        original = out.read_bytes()
        out.unlink()
        self.assertEqual(main(['gen', '--from-manifest', str(manifest_path(out)), '--no-progress']), 0)
        self.assertEqual(out.read_bytes(), original)
        self.assertEqual(main(['train', '--from-manifest', str(manifest_path(out))]), EXIT_VALIDATION)

    def test_pipeline(self):
        data = self.root / 'data.cams'
        model = self.root / 'model.camr'
        report = self.root / 'eval' / 'report.json'
        alerts = self.root / 'alerts.jsonl'
        self.assertEqual(self.cli('gen', '--seed', '5', '--count', '6', '--positive', '0.5', '--out', str(data)), 0)
        self.assertEqual(self.cli('train', '--data', str(data), '--out', str(model)), 0)
        self.assertTrue(model.exists())
        self.assertTrue((self.root / 'model.camr.log.jsonl').exists())

        self.assertEqual(self.cli('eval', '--ckpt', str(model), '--data', str(data), '--out', str(report)), 0)
        result = json.loads(report.read_text(encoding='utf-8'))
        self.assertEqual(result['videos'], 6)
        with open(self.root / 'eval' / 'report_sweep.csv', encoding='utf-8', newline='') as f:
            header = next(csv.reader(f))
        self.assertEqual(header, ['theta', 'precision', 'recall', 'mean_tta_s'])
        self.assertEqual(len(list((self.root / 'eval' / 'report_traces').glob('*.csv'))), 6)

        self.assertEqual(self.cli('alert', '--ckpt', str(model), '--data', str(data), '--index', '0',
                                  '--describe-all', '--out', str(alerts)), 0)
        records = [json.loads(line) for line in alerts.read_text(encoding='utf-8').splitlines()]
        self.assertTrue(records)
        self.assertEqual(self.cli('alert', '--ckpt', str(model), '--data', str(data), '--index', '9',
                                  '--out', str(alerts)), EXIT_VALIDATION)


class TestRunConfig(unittest.TestCase):
    """Precedence of defaults, config file and flags"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name) / 'run.env'

    def tearDown(self):
        self.tmp.cleanup()

    def test_flags_override_file(self):
        self.path.write_text('seed=9\ntrain.epochs=7\ntrain.learning_rate=0.01\ncount=12\n', encoding='utf-8')
        run = resolve_run_config('train', {'train.epochs': 3, 'seed': None}, str(self.path))
        self.assertEqual(run.train.epochs, 3)
        self.assertEqual(run.train.learning_rate, 0.01)
        self.assertEqual(run.seed, 9)
        self.assertEqual(run.train.seed, 9)
        self.assertEqual(run.options['count'], '12')

    def test_pinned_train_seed(self):
        self.path.write_text('train.seed=4\n', encoding='utf-8')
        run = resolve_run_config('train', {'seed': 11}, str(self.path))
        self.assertEqual((run.seed, run.train.seed), (11, 4))

    def test_unknown_keys(self):
        with self.assertRaises(ConfigError):
            resolve_run_config('gen', {'train.bogus': 1})
        with self.assertRaises(ConfigError):
            resolve_run_config('gen', {'optics.zoom': 1})
        self.path.write_text('optics.zoom=2\n', encoding='utf-8')
        with self.assertRaises(ConfigError):
            resolve_run_config('gen', {}, str(self.path))
        with self.assertRaises(ConfigError):
            resolve_run_config('gen', {}, str(self.path) + '.missing')

    def test_invalid_values(self):
        self.path.write_text('train.epochs=many\n', encoding='utf-8')
        with self.assertRaises(ConfigError):
            resolve_run_config('train', {}, str(self.path))
        with self.assertRaises(ConfigError):
            resolve_run_config('gen', {'seed': -1})

    def test_manifest_round_trip(self):
        run = resolve_run_config('eval', {'eval.causal': True, 'seed': 21, 'out': 'r.json'})
        artifact = Path(self.tmp.name) / 'r.json'
        artifact.write_text('{}\n', encoding='utf-8')
        path = write_manifest(run, [artifact], artifact)
        self.assertEqual(path.name, 'r.json.manifest.json')
        restored = load_manifest(path)
        self.assertEqual(restored.to_dict(), run.to_dict())
        self.assertTrue(restored.eval.causal)
        self.assertEqual(restored.model.variant, 'full')

    def test_malformed_manifests(self):
        data = RunConfig(command='gen').to_dict()
        data['train']['momentum'] = 0.9
        with self.assertRaises(ConfigError):
            RunConfig.from_dict(data)
        with self.assertRaises(ConfigError):
            RunConfig.from_dict({'seed': 1})
        self.path.write_text('not json', encoding='utf-8')
        with self.assertRaises(ConfigError):
            load_manifest(self.path)


class TestExports(unittest.TestCase):
    """Deterministic writers"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_csv_values(self):
        path = export_manager.write_csv(self.root / 'rows.csv', [{'theta': 0.1, 'precision': None, 'tp': 3}])
        self.assertEqual(path.read_text(encoding='utf-8'), 'theta,precision,tp\n0.1,,3\n')

    def test_json_drops_non_finite(self):
        path = export_manager.write_json(self.root / 'a' / 'r.json', {'b': float('nan'), 'a': (1, 2)})
        self.assertEqual(json.loads(path.read_text(encoding='utf-8')), {'a': [1, 2], 'b': None})

    def test_markdown_with_html(self):
        written = export_manager.write_markdown(self.root / 'report.md', '# Title\n\n| a |\n|---|\n| 1 |\n')
        self.assertEqual([path.name for path in written], ['report.md', 'report.html'])
        self.assertIn('<table>', written[1].read_text(encoding='utf-8'))

    def test_artifact_paths(self):
        paths = export_manager.artifact_paths(self.root / 'out.json')
        self.assertEqual(paths['sweep'].name, 'out_sweep.csv')
        self.assertEqual(paths['traces'].name, 'out_traces')
        self.assertEqual(export_manager.trace_filename(3, True), 'trace_0003_pos.csv')


class TestGradcheck(unittest.TestCase):
    """Finite differences agree with autograd"""

    def test_miniature_model_passes(self):
        report = miniature_gradcheck(seed=3, frames=2, max_entries=2)
        self.assertTrue(report.passed, report.worst)

    def test_too_few_frames(self):
        with self.assertRaises(ConfigError):
            miniature_gradcheck(frames=1)


class TestFailureStatus(unittest.TestCase):
    """Exit codes of failed commands"""

    def test_exit_codes(self):
        self.assertEqual(failure('gen', ConfigError('bad'))['exit_code'], EXIT_VALIDATION)
        self.assertEqual(failure('gen', ParseError('truncated', 12))['exit_code'], EXIT_VALIDATION)
        self.assertEqual(failure('gen', RuntimeError('boom'))['exit_code'], EXIT_RUNTIME)
        status = failure('train', NonFiniteGradientError('fusion.w'))
        self.assertFalse(status['success'])
        self.assertEqual(status['exit_code'], EXIT_RUNTIME)
        self.assertIn('fusion.w', status['error'])


if __name__ == '__main__':
    unittest.main()
