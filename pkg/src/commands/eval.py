"""
eval: score a checkpoint on a scenario file

Writes the EvalReport JSON (--out), the threshold sweep as CSV next to it
and one RiskTrace CSV per sequence in a sibling directory.
"""
import logging
import shutil

from . import enabled, failure, require, success
from ..checkpoint_storage import checkpoint_storage
from ..evaluation import evaluate, sweep_rows, trace_rows
from ..export_manager import export_manager
from ..run_manifest import RunConfig, write_manifest
from ..scenario_storage import scenario_storage

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ['theta', 'precision', 'recall', 'mean_tta_s']
TRACE_COLUMNS = ['frame', 'p', 'tau', 'alert', 'argmax_x', 'argmax_y']


def add_arguments(parser):
    parser.add_argument('--ckpt', help='Checkpoint to evaluate (.camr)')
    parser.add_argument('--data', help='Test scenario file (.cams)')
    parser.add_argument('--out', help='EvalReport JSON to write')
    parser.add_argument('--causal', action='store_const', const=True, dest='eval.causal',
                        help='Forward-only temporal mode')
    parser.add_argument('--tta-mode', choices=('sweep', 'fixed'), dest='eval.tta_mode',
                        help='mTTA averaged over the sweep or read at a fixed threshold')
    parser.add_argument('--fixed-theta', type=float, dest='eval.fixed_theta', help='Threshold for --tta-mode fixed')
    parser.add_argument('--static-threshold', type=float, dest='eval.static_threshold',
                        help='Static threshold the adaptive trigger is compared against')
    parser.add_argument('--no-traces', action='store_const', const=True, dest='no_traces',
                        help='Skip the per-sequence RiskTrace CSVs')


def flags(args):
    keys = ('ckpt', 'data', 'out', 'no_traces', 'eval.causal', 'eval.tta_mode', 'eval.fixed_theta',
            'eval.static_threshold')
    return {key: getattr(args, key) for key in keys}


def run(run_config: RunConfig, show_progress: bool = True):
    """Evaluate and export the report, sweep and traces"""
    try:
        options = run_config.options
        require(options, 'ckpt', 'data', 'out')
        model = checkpoint_storage.load(options['ckpt'])
        sequences = scenario_storage.load(options['data'])
        traces = model.trace(sequences, causal=run_config.eval.causal)
        report = evaluate(traces, run_config.eval)

        paths = export_manager.artifact_paths(options['out'])
        export_manager.write_json(paths['report'], report.to_dict())
        export_manager.write_csv(paths['sweep'], sweep_rows(report.sweep), SWEEP_COLUMNS)
        artifacts = [paths['report'], paths['sweep']]
        if not enabled(options.get('no_traces', False)):
            if paths['traces'].exists():
                shutil.rmtree(paths['traces'])
            for index, trace in enumerate(traces):
                name = export_manager.trace_filename(index, trace.label)
                export_manager.write_csv(paths['traces'] / name, trace_rows(trace), TRACE_COLUMNS)
            artifacts.append(paths['traces'])
            logger.info(f"Wrote {len(traces)} risk traces to {paths['traces']}")
        manifest = write_manifest(run_config, artifacts, paths['report'])
        return success(outputs=[str(path) for path in artifacts] + [str(manifest)],
                       ap=report.ap, auc=report.auc, mtta_s=report.mtta_s, tta_at_r50_s=report.tta_at_r50_s,
                       false_alarm_rate=report.false_alarm_rate)
    except Exception as e:
        return failure('eval', e)
