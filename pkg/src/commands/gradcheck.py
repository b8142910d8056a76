"""
gradcheck: finite-difference check of the end-to-end training loss

Builds a miniature model, feeds it seeded random inputs and compares the
autograd gradient of the composite loss (through encoders, fusion, the
recurrence and both heads) with central differences.
"""
import logging
import time
from typing import Optional

import torch

from . import EXIT_RUNTIME, failure, success
from ..config import ModelConfig, TrainConfig
from ..exceptions import ConfigError
from ..export_manager import export_manager
from ..model import MODULE_NAMES, CameraModel
from ..run_manifest import RunConfig, write_manifest
from ..tensor_kernel import DTYPE, GradCheckReport, Rng, grad_check
from ..training import compute_losses

logger = logging.getLogger(__name__)

MINIATURE = dict(grid_size=4, feature_size=2, channels=4, lift_channels=4, reduction=2,
                 hidden_size=3, bases=2, levels=2)


def add_arguments(parser):
    parser.add_argument('--frames', type=int, help='Sequence length (default 8)')
    parser.add_argument('--max-entries', type=int, dest='max_entries',
                        help='Entries checked per parameter tensor (default 8, 0 = all)')
    parser.add_argument('--tolerance', type=float, help='Maximum relative error (default 1e-4)')
    parser.add_argument('--out', help='Optional JSON report to write')


def flags(args):
    return {key: getattr(args, key) for key in ('frames', 'max_entries', 'tolerance', 'out')}


def miniature_gradcheck(seed: int = 42, frames: int = 8, max_entries: Optional[int] = 8,
                        tolerance: float = 1e-4, causal: bool = False) -> GradCheckReport:
    """
    Gradient check of the composite loss on a miniature model

    Args:
        seed: Seed for the model and the random inputs
        frames: Number of frames (recurrence steps)
        max_entries: Entries sampled per parameter tensor, None for all
        tolerance: Pass threshold on the max relative error
        causal: Check the forward-only temporal mode instead

    Returns:
        GradCheckReport
    """
    if frames < 2:
        raise ConfigError(f"gradcheck needs at least 2 frames, got {frames}")
    config = ModelConfig(**MINIATURE)
    model = CameraModel(config, seed=seed)
    first = len(MODULE_NAMES) + 1
    inputs_rng, sample_rng = Rng(seed).spawn(first + 2)[first:]
    size = config.grid_size
    scene = torch.from_numpy(inputs_rng.uniform(0.0, 1.0, size=(2, frames, size, size, 3)))
    attention = torch.from_numpy(inputs_rng.uniform(0.1, 1.0, size=(2, frames, size, size)))
    tokens = torch.from_numpy(inputs_rng.integers(1, config.vocab_size, size=(2, 6)))
    targets = torch.zeros(2, frames, dtype=DTYPE)
    targets[0, frames // 2:] = 1.0
    mask = torch.ones(2, frames, dtype=DTYPE)
    train_config = TrainConfig()

    named = [(name, param) for name, param in model.named_parameters() if name != 'head.lambdas']

    def loss():
        output = model(scene, tokens, attention, causal=causal)
        return compute_losses(output, attention, targets, mask, train_config, model.head.lambdas).total

    started = time.perf_counter()
    report = grad_check(loss, [param for _, param in named], step=1e-5, tol=tolerance,
                        names=[name for name, _ in named], max_entries=max_entries, rng=sample_rng)
    worst_name, worst = report.worst
    logger.info(f"Checked {sum(report.checked_entries.values())} entries of {len(named)} tensors in "
                f"{time.perf_counter() - started:.1f}s; worst {worst:.2e} at {worst_name}")
    return report


def run(run_config: RunConfig, show_progress: bool = True):
    """Run the check and report pass/fail"""
    try:
        options = run_config.options
        max_entries = int(options.get('max_entries', 8))
        report = miniature_gradcheck(seed=run_config.seed, frames=int(options.get('frames', 8)),
                                     max_entries=max_entries or None,
                                     tolerance=float(options.get('tolerance', 1e-4)),
                                     causal=run_config.eval.causal)
        worst_name, worst = report.worst
        summary = {'passed': report.passed, 'max_rel_error': worst, 'worst_parameter': worst_name,
                   'tolerance': report.tolerance, 'checked_entries': sum(report.checked_entries.values()),
                   'per_parameter': report.max_rel_error}
        outputs = []
        if options.get('out'):
            out = export_manager.write_json(options['out'], summary)
            outputs = [str(out), str(write_manifest(run_config, [out], out))]
        print(f"gradcheck {'PASS' if report.passed else 'FAIL'}: max relative error {worst:.3e} "
              f"(tolerance {report.tolerance:.0e}) at {worst_name}")
        if not report.passed:
            return {'success': False, 'exit_code': EXIT_RUNTIME, 'error': 'gradient check failed', **summary}
        return success(outputs=outputs, **summary)
    except Exception as e:
        return failure('gradcheck', e)
