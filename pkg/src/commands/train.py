"""
train: fit a model on a scenario file and write a checkpoint plus a JSON-lines log
"""
import logging
from pathlib import Path

from . import failure, require, success
from ..checkpoint_storage import checkpoint_storage
from ..config import ModelConfig, TrainConfig
from ..exceptions import TrainingDiverged
from ..model import CameraModel
from ..run_manifest import RunConfig, write_manifest
from ..scenario_storage import scenario_storage
from ..training import Trainer

logger = logging.getLogger(__name__)


def add_arguments(parser):
    parser.add_argument('--data', help='Training scenario file (.cams)')
    parser.add_argument('--out', help='Checkpoint to write (.camr)')
    parser.add_argument('--log', help='JSON-lines training log (default: <out>.log.jsonl)')
    parser.add_argument('--epochs', type=int, dest='train.epochs', help='Maximum epochs')
    parser.add_argument('--batch-size', type=int, dest='train.batch_size', help='Sequences per step')
    parser.add_argument('--lr', type=float, dest='train.learning_rate', help='Peak learning rate')
    parser.add_argument('--patience', type=int, dest='train.patience', help='Early-stopping patience in epochs')
    parser.add_argument('--window', type=float, dest='train.window_s', help='Sliding-window length in seconds')
    parser.add_argument('--kl-direction', choices=TrainConfig.KL_DIRECTIONS, dest='train.kl_direction',
                        help='Direction of the attention alignment term')
    parser.add_argument('--freeze-thresholds', action='store_const', const=False, dest='train.learn_thresholds',
                        help='Keep the threshold coefficients at their initial values')
    parser.add_argument('--variant', choices=ModelConfig.VARIANTS, dest='model.variant',
                        help='Model variant (module knockouts)')


def flags(args):
    keys = ('data', 'out', 'log', 'train.epochs', 'train.batch_size', 'train.learning_rate', 'train.patience',
            'train.window_s', 'train.kl_direction', 'train.learn_thresholds', 'model.variant')
    return {key: getattr(args, key) for key in keys}


def run(run_config: RunConfig, show_progress: bool = True):
    """Train, save the best checkpoint and write the manifest"""
    try:
        options = run_config.options
        require(options, 'data', 'out')
        out = Path(options['out'])
        log_path = Path(options.get('log') or out.with_name(out.name + '.log.jsonl'))
        sequences = scenario_storage.load(options['data'])
        trainer = Trainer(run_config.train, run_config.model, log_path=log_path, show_progress=show_progress)
        try:
            result = trainer.train(sequences)
        except TrainingDiverged as e:
            if e.last_good_state is not None:
                model = CameraModel(run_config.model, seed=run_config.train.seed)
                model.load_state_dict(e.last_good_state)
                rescue = out.with_name(out.name + '.last-good')
                checkpoint_storage.save(rescue, model)
                logger.error(f"Training diverged at epoch {e.epoch}; last good state saved to {rescue}")
            raise
        checkpoint_storage.save(out, result.model)
        manifest = write_manifest(run_config, [out, log_path], out)
        return success(outputs=[str(out), str(log_path), str(manifest)], best_epoch=result.best_epoch,
                       best_score=result.best_score, stopped_early=result.stopped_early)
    except Exception as e:
        return failure('train', e)
