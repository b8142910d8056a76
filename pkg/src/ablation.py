#!/usr/bin/env python3
"""
Ablation harness

Trains the model on shrinking training sets, evaluates it under frame
drops, and compares the full model against each module knockout. The
result is three tables: data proportion, drop rate and module removal.
"""

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from .config import Config, EvalConfig, ModelConfig, TrainConfig
from .evaluation import EvalReport, evaluate
from .exceptions import ConfigError, InputError
from .model import MODULE_NAMES, CameraModel
from .scenario_sim import ScenarioSequence
from .tensor_kernel import Rng
from .training import Trainer
from .utils.helpers import format_metric

logger = logging.getLogger(__name__)

TRAIN_FRACTIONS = (0.5, 0.75, 1.0)
DROP_RATES = (0.1, 0.2, 0.5)
KNOCKOUTS = (
    ('no_mfe', 'w/o MFE'),
    ('no_ahf', 'w/o AHF'),
    ('no_bigru', 'w/o Bi-GRU'),
)


@dataclass
class AblationRow:
    table: str  # 'matrix' or 'module'
    setting: str
    train_fraction: float
    drop_rate: float
    variant: str
    ap: Optional[float]
    mtta_s: Optional[float]
    tta_at_r50_s: Optional[float]


@dataclass
class AblationReport:
    rows: List[AblationRow] = field(default_factory=list)
    seed: int = 42
    baseline_identical: Optional[bool] = None

    def table(self, name: str) -> List[AblationRow]:
        return [row for row in self.rows if row.table == name]

    def to_dict(self) -> Dict:
        return {
            'seed': self.seed,
            'baseline_identical': self.baseline_identical,
            'rows': [asdict(row) for row in self.rows],
        }

    def to_markdown(self) -> str:
        """The three tables as Markdown"""
        lines = ['# Ablation results', '', f'Seed: {self.seed}', '']
        lines += ['## Training data proportion', '',
                  '| Train fraction | Drop rate | AP | mTTA (s) | TTA@R50 (s) |',
                  '|---|---|---|---|---|']
        for row in self.table('matrix'):
            lines.append(f'| {row.train_fraction:.0%} | {row.drop_rate:.0%} | {format_metric(row.ap)} | '
                         f'{format_metric(row.mtta_s)} | {format_metric(row.tta_at_r50_s)} |')
        lines += ['', '## Frame drop rate', '',
                  '| Drop rate | Train fraction | AP | mTTA (s) | TTA@R50 (s) |',
                  '|---|---|---|---|---|']
        for row in sorted(self.table('matrix'), key=lambda r: (r.drop_rate, r.train_fraction)):
            lines.append(f'| {row.drop_rate:.0%} | {row.train_fraction:.0%} | {format_metric(row.ap)} | '
                         f'{format_metric(row.mtta_s)} | {format_metric(row.tta_at_r50_s)} |')
        lines += ['', '## Module ablation', '',
                  '| Model | AP | mTTA (s) | TTA@R50 (s) |',
                  '|---|---|---|---|']
        for row in self.table('module'):
            lines.append(f'| {row.setting} | {format_metric(row.ap)} | {format_metric(row.mtta_s)} | {format_metric(row.tta_at_r50_s)} |')
        if self.baseline_identical is not None:
            lines += ['', f'Drop rate 0 reproduces the base run: {"yes" if self.baseline_identical else "no"}']
        return '\n'.join(lines) + '\n'


def training_subset(sequences: Sequence[ScenarioSequence], fraction: float) -> List[ScenarioSequence]:
    """Leading share of the training list (at least two sequences)"""
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"Training fraction must be in (0, 1], got {fraction}")
    count = max(2, int(round(len(sequences) * fraction)))
    return list(sequences[:count])


def drop_masks(sequences: Sequence[ScenarioSequence], rate: float, rng: Rng) -> List[np.ndarray]:
    """Per-sequence boolean masks of dropped frames; frame 0 is always observed"""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"Drop rate must be in [0, 1), got {rate}")
    masks = []
    for seq in sequences:
        mask = rng.random(seq.frames) < rate
        mask[0] = False
        masks.append(mask)
    return masks


def drop_frames(seq: ScenarioSequence, mask: np.ndarray) -> ScenarioSequence:
    """
    Replace dropped frames by the last observed frame

    The encoders see each frame independently, so repeating the observed
    inputs repeats their features. Geometry and labels are untouched.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (seq.frames,):
        raise InputError(f"Drop mask has shape {mask.shape}, sequence has {seq.frames} frames")
    if not mask.any():
        return seq
    if mask[0]:
        raise InputError("The first frame cannot be dropped")
    source = np.maximum.accumulate(np.where(mask, 0, np.arange(seq.frames)))
    return replace(seq, grid_levels=seq.grid_levels[source], attention_map=seq.attention_map[source])


class AblationHarness:
    """
    Runs the ablation matrix on a fixed train/test split

    Args:
        train_config: Settings for every training run
        model_config: Network settings of the full model
        eval_config: Evaluation protocol
        fractions: Training-data proportions
        drop_rates: Test-time frame drop rates
        show_progress: tqdm bar over runs
    """

    def __init__(self, train_config: Optional[TrainConfig] = None, model_config: Optional[ModelConfig] = None,
                 eval_config: Optional[EvalConfig] = None, fractions: Sequence[float] = TRAIN_FRACTIONS,
                 drop_rates: Sequence[float] = DROP_RATES, show_progress: Optional[bool] = None):
        self.train_config = (train_config or TrainConfig()).validate()
        self.model_config = (model_config or ModelConfig()).validate()
        self.eval_config = (eval_config or EvalConfig()).validate()
        self.fractions = tuple(fractions)
        self.drop_rates = tuple(drop_rates)
        self.show_progress = Config.SHOW_PROGRESS if show_progress is None else show_progress

    def _fit(self, sequences: Sequence[ScenarioSequence], variant: str) -> CameraModel:
        model_config = replace(self.model_config, variant=variant)
        return Trainer(self.train_config, model_config, show_progress=False).train(sequences).model

    def _score(self, model: CameraModel, test: Sequence[ScenarioSequence]) -> EvalReport:
        return evaluate(model.trace(test, causal=self.eval_config.causal), self.eval_config)

    def _dropped(self, test: Sequence[ScenarioSequence], rate: float, rng: Rng) -> List[ScenarioSequence]:
        return [drop_frames(seq, mask) for seq, mask in zip(test, drop_masks(test, rate, rng))]

    def run(self, train: Sequence[ScenarioSequence], test: Sequence[ScenarioSequence]) -> AblationReport:
        """
        Run every cell of the matrix

        Args:
            train: Training sequences
            test: Test sequences

        Returns:
            AblationReport with the fraction x drop-rate matrix and the module rows
        """
        if not train or not test:
            raise InputError("Ablation needs non-empty train and test sets")
        seed = self.train_config.seed
        report = AblationReport(seed=seed)
        # children past the initialization and shuffle streams of the same seed
        first = len(MODULE_NAMES) + 1
        drop_streams = dict(zip(self.drop_rates, Rng(seed).spawn(first + len(self.drop_rates))[first:]))
        # the same frames are dropped for every training fraction
        dropped_tests = {rate: self._dropped(test, rate, drop_streams[rate]) for rate in self.drop_rates}

        runs = [('full', fraction) for fraction in self.fractions]
        if 1.0 not in self.fractions:
            runs.append(('full', 1.0))
        runs += [(variant, 1.0) for variant, _ in KNOCKOUTS]
        progress = tqdm(runs, desc='Ablation', disable=not self.show_progress)
        base: Optional[EvalReport] = None
        module_rows: Dict[str, AblationRow] = {}
        for variant, fraction in progress:
            progress.set_postfix_str(f'{variant} {fraction:.0%}')
            model = self._fit(training_subset(train, fraction), variant)
            clean = self._score(model, test)
            if variant == 'full' and fraction == 1.0:
                base = clean
                replay = self._score(model, self._dropped(test, 0.0, Rng(seed)))
                report.baseline_identical = replay.to_dict() == base.to_dict()
            if fraction == 1.0:
                label = 'Full model' if variant == 'full' else dict(KNOCKOUTS)[variant]
                module_rows[variant] = self._row('module', label, fraction, 0.0, variant, clean)
            if variant != 'full' or fraction not in self.fractions:
                continue
            for rate in self.drop_rates:
                scored = self._score(model, dropped_tests[rate])
                row = self._row('matrix', f'{fraction:.0%} / {rate:.0%}', fraction, rate, variant, scored)
                report.rows.append(row)

        report.rows += [module_rows[variant] for variant in ('full',) + tuple(v for v, _ in KNOCKOUTS)]
        logger.info(f"Ablation finished: {len(report.table('matrix'))} matrix cells, "
                    f"{len(report.table('module'))} module rows; base AP={base.ap if base else None}")
        return report

    @staticmethod
    def _row(table: str, setting: str, fraction: float, rate: float, variant: str,
             scored: EvalReport) -> AblationRow:
        return AblationRow(table, setting, fraction, rate, variant, scored.ap, scored.mtta_s, scored.tta_at_r50_s)


def run_ablation(train: Sequence[ScenarioSequence], test: Sequence[ScenarioSequence],
                 train_config: Optional[TrainConfig] = None, model_config: Optional[ModelConfig] = None,
                 eval_config: Optional[EvalConfig] = None, show_progress: Optional[bool] = None) -> AblationReport:
    """Convenience wrapper around AblationHarness"""
    return AblationHarness(train_config, model_config, eval_config, show_progress=show_progress).run(train, test)
