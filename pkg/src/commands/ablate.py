"""
ablate: run the ablation matrix and write the report tables

--out names the Markdown report; the HTML rendering and the JSON rows are
written next to it.
"""
import logging
from pathlib import Path

from . import failure, require, success
from ..ablation import AblationHarness, DROP_RATES, TRAIN_FRACTIONS
from ..exceptions import ConfigError
from ..export_manager import export_manager
from ..run_manifest import RunConfig, write_manifest
from ..scenario_sim import generate_benchmark
from ..scenario_storage import scenario_storage

logger = logging.getLogger(__name__)


def add_arguments(parser):
    parser.add_argument('--train-data', dest='train_data', help='Training scenario file (default: generate)')
    parser.add_argument('--test-data', dest='test_data', help='Test scenario file (default: generate)')
    parser.add_argument('--train-count', type=int, dest='train_count',
                        help='Generated training sequences (default 300)')
    parser.add_argument('--test-count', type=int, dest='test_count', help='Generated test sequences (default 100)')
    parser.add_argument('--positive', type=float, help='Positive fraction of generated data (default 0.4)')
    parser.add_argument('--out', help='Markdown report to write (.md)')
    parser.add_argument('--epochs', type=int, dest='train.epochs', help='Maximum epochs per run')
    parser.add_argument('--causal', action='store_const', const=True, dest='eval.causal',
                        help='Forward-only temporal mode at evaluation')


def flags(args):
    keys = ('train_data', 'test_data', 'train_count', 'test_count', 'positive', 'out', 'train.epochs', 'eval.causal')
    return {key: getattr(args, key) for key in keys}


def _datasets(run_config: RunConfig):
    options = run_config.options
    if options.get('train_data') and options.get('test_data'):
        return scenario_storage.load(options['train_data']), scenario_storage.load(options['test_data'])
    if options.get('train_data') or options.get('test_data'):
        raise ConfigError("--train-data and --test-data must be given together")
    return generate_benchmark(run_config.seed, int(options.get('train_count', 300)),
                              int(options.get('test_count', 100)), float(options.get('positive', 0.4)),
                              run_config.scenario)


def run(run_config: RunConfig, show_progress: bool = True):
    """Run the ablation and export Markdown, HTML and JSON"""
    try:
        require(run_config.options, 'out')
        train, test = _datasets(run_config)
        harness = AblationHarness(run_config.train, run_config.model, run_config.eval,
                                  TRAIN_FRACTIONS, DROP_RATES, show_progress=show_progress)
        report = harness.run(train, test)
        out = Path(run_config.options['out'])
        written = export_manager.write_markdown(out, report.to_markdown())
        written.append(export_manager.write_json(out.with_suffix('.json'), report.to_dict()))
        manifest = write_manifest(run_config, written, out)
        if report.baseline_identical is False:
            logger.warning("Drop rate 0 did not reproduce the base run")
        return success(outputs=[str(path) for path in written] + [str(manifest)], rows=len(report.rows),
                       baseline_identical=report.baseline_identical)
    except Exception as e:
        return failure('ablate', e)
