"""
gen: generate a synthetic scenario file
"""
import logging

from . import enabled, failure, require, success
from ..run_manifest import RunConfig, write_manifest
from ..scenario_sim import generate, generate_stress_set, summarize
from ..scenario_storage import scenario_storage

logger = logging.getLogger(__name__)


def add_arguments(parser):
    parser.add_argument('--count', type=int, help='Number of sequences (default 300)')
    parser.add_argument('--positive', type=float, help='Fraction of collision sequences (default 0.4)')
    parser.add_argument('--out', help='Scenario file to write (.cams)')
    parser.add_argument('--stress', action='store_const', const=True,
                        help='Two-regime stress set: benign low-complexity and hazard high-complexity clips')
    parser.add_argument('--frames', type=int, dest='scenario.frames', help='Frames per sequence')
    parser.add_argument('--fps', type=int, dest='scenario.fps', help='Frames per second')
    parser.add_argument('--grid', type=int, dest='scenario.grid_size', help='Occupancy grid size')
    parser.add_argument('--distraction-rate', type=float, dest='scenario.distraction_rate',
                        help='Probability of a distracted driver')


def flags(args):
    return {key: getattr(args, key) for key in ('count', 'positive', 'out', 'stress', 'scenario.frames',
                                                'scenario.fps', 'scenario.grid_size', 'scenario.distraction_rate')}


def run(run_config: RunConfig, show_progress: bool = True):
    """Generate sequences and write them with a manifest"""
    try:
        options = run_config.options
        require(options, 'out')
        count = int(options.get('count', 300))
        if enabled(options.get('stress', False)):
            sequences = generate_stress_set(run_config.seed, count, run_config.scenario)
        else:
            sequences = generate(run_config.seed, count, float(options.get('positive', 0.4)), run_config.scenario)
        out = options['out']
        scenario_storage.save(out, sequences)
        manifest = write_manifest(run_config, [out], out)
        stats = summarize(sequences)
        logger.info(f"Wrote {stats['count']} sequences ({stats['positives']} positive) to {out}")
        return success(outputs=[str(out), str(manifest)], summary=stats)
    except Exception as e:
        return failure('gen', e)
