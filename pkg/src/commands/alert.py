"""
alert: replay a sequence through a checkpoint and write its alert stream
"""
import logging

from . import enabled, failure, require, success
from ..checkpoint_storage import checkpoint_storage
from ..exceptions import InputError
from ..export_manager import export_manager
from ..geo_alert import alert_stream
from ..run_manifest import RunConfig, write_manifest
from ..scenario_storage import scenario_storage

logger = logging.getLogger(__name__)


def add_arguments(parser):
    parser.add_argument('--ckpt', help='Checkpoint (.camr)')
    parser.add_argument('--data', help='Scenario file (.cams)')
    parser.add_argument('--index', type=int, help='Sequence index in the file (default 0)')
    parser.add_argument('--out', help='JSON-lines alert stream to write')
    parser.add_argument('--mode', choices=('ego', 'compass'), help="Spatial wording (default 'ego')")
    parser.add_argument('--heading', type=float, help='Vehicle heading in degrees for compass mode (0 = north)')
    parser.add_argument('--describe-all', action='store_const', const=True, dest='describe_all',
                        help='Describe the linked agent on every frame, triggered or not')
    parser.add_argument('--suggest', action='store_const', const=True, help='Append an action suggestion')
    parser.add_argument('--causal', action='store_const', const=True, dest='eval.causal',
                        help='Forward-only temporal mode')


def flags(args):
    keys = ('ckpt', 'data', 'index', 'out', 'mode', 'heading', 'describe_all', 'suggest', 'eval.causal')
    return {key: getattr(args, key) for key in keys}


def run(run_config: RunConfig, show_progress: bool = True):
    """Trace one sequence and export its alerts"""
    try:
        options = run_config.options
        require(options, 'ckpt', 'data', 'out')
        sequences = scenario_storage.load(options['data'])
        index = int(options.get('index', 0))
        if not 0 <= index < len(sequences):
            raise InputError(f"--index {index} outside the {len(sequences)} sequences of {options['data']}")
        seq = sequences[index]
        model = checkpoint_storage.load(options['ckpt'])
        trace = model.trace([seq], causal=run_config.eval.causal)[0]
        alerts = alert_stream(seq, trace, mode=options.get('mode', 'ego'), heading=float(options.get('heading', 0.0)),
                              describe_all=enabled(options.get('describe_all', False)),
                              suggest=enabled(options.get('suggest', False)))
        out = export_manager.write_jsonl(options['out'], [alert.to_record() for alert in alerts])
        manifest = write_manifest(run_config, [out], out)
        for alert in alerts[:3]:
            logger.info(f"Frame {alert.frame}: {alert.text}")
        return success(outputs=[str(out), str(manifest)], alerts=len(alerts))
    except Exception as e:
        return failure('alert', e)
