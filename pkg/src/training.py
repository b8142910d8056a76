#!/usr/bin/env python3
"""
Training

Composite loss (focal + 0.5 KL + 0.1 smoothness), AdamW with linear warmup
and cosine decay, global-norm clipping, threshold-coefficient calibration
and the deterministic epoch loop with validation-AP early stopping.
"""

import copy
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from tqdm import tqdm

from .config import Config, ModelConfig, TrainConfig
from .evaluation import average_precision, sweep
from .exceptions import DimensionError, InputError, NonFiniteGradientError, TrainingDiverged, UndefinedMetricError
from .model import MODULE_NAMES, CameraModel, ModelOutput, batch_tensors
from .risk_head import adaptive_threshold
from .scenario_sim import ScenarioSequence, label_frames, sliding_windows
from .tensor_kernel import DTYPE, Rng, downsample_mean

logger = logging.getLogger(__name__)

PROB_CLAMP = 1e-7
KL_EPS = 1e-8
KL_WEIGHT = 0.5
SMOOTH_WEIGHT = 0.1
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass
class LossTerms:
    """Loss components; total = focal + 0.5 kl + 0.1 smooth"""
    focal: torch.Tensor
    kl: torch.Tensor
    smooth: torch.Tensor
    threshold: torch.Tensor = field(default_factory=lambda: torch.zeros((), dtype=DTYPE))

    @property
    def total(self) -> torch.Tensor:
        return self.focal + KL_WEIGHT * self.kl + SMOOTH_WEIGHT * self.smooth

    def as_dict(self) -> Dict[str, float]:
        return {
            'focal': float(self.focal),
            'kl': float(self.kl),
            'smooth': float(self.smooth),
            'threshold': float(self.threshold),
            'total': float(self.total),
        }


def _masked_mean(values: torch.Tensor, mask: Optional[torch.Tensor]) -> torch.Tensor:
    if mask is None:
        return values.mean()
    mask = mask.to(values.dtype)
    return (values * mask).sum() / mask.sum().clamp(min=1.0)


def focal_loss(p: torch.Tensor, y: torch.Tensor, gamma: float = 2.0, alpha: float = 0.25,
               mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """
    Mean over frames of -alpha_t (1 - p_t')^gamma ln(p_t')

    p_t' is p for positive frames and 1 - p otherwise; alpha_t is alpha for
    positive frames and 1 - alpha otherwise. p is clamped to [1e-7, 1 - 1e-7].
    """
    p = torch.as_tensor(p, dtype=DTYPE)
    y = torch.as_tensor(y, dtype=DTYPE)
    if p.shape != y.shape:
        raise DimensionError(f"focal_loss length mismatch: {tuple(p.shape)} vs {tuple(y.shape)}")
    p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    p_true = torch.where(y > 0.5, p, 1.0 - p)
    alpha_t = torch.where(y > 0.5, torch.full_like(p, alpha), torch.full_like(p, 1.0 - alpha))
    return _masked_mean(-alpha_t * (1.0 - p_true) ** gamma * torch.log(p_true), mask)


def attention_target(attention: torch.Tensor, size: Tuple[int, int]) -> torch.Tensor:
    """Average-pool attention maps to the risk-map extent and normalize with eps"""
    pooled = downsample_mean(torch.as_tensor(attention, dtype=DTYPE), size) + KL_EPS
    return pooled / pooled.sum(dim=(-2, -1), keepdim=True)


def kl_divergence(q: torch.Tensor, m: torch.Tensor) -> torch.Tensor:
    """sum q ln(q / m) over the last two axes, both sides floored at eps"""
    q = q.clamp(min=KL_EPS)
    m = m.clamp(min=KL_EPS)
    return (q * (torch.log(q) - torch.log(m))).sum(dim=(-2, -1))


def kl_alignment(q_attention: torch.Tensor, risk_maps: torch.Tensor, direction: str = 'attention_to_risk',
                 mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """
    Mean KL divergence between attention targets and risk maps

    Args:
        q_attention: Attention distributions at the risk-map extent (..., h, w)
        risk_maps: Risk maps (..., h, w)
        direction: 'attention_to_risk' for KL(Q || M), 'risk_to_attention' for KL(M || Q)
        mask: Optional frame weights (...)
    """
    if q_attention.shape != risk_maps.shape:
        raise DimensionError(f"kl_alignment shapes differ: {tuple(q_attention.shape)} vs {tuple(risk_maps.shape)}")
    if direction == 'attention_to_risk':
        values = kl_divergence(q_attention, risk_maps)
    elif direction == 'risk_to_attention':
        values = kl_divergence(risk_maps, q_attention)
    else:
        raise InputError(f"Unknown KL direction {direction!r}")
    return _masked_mean(values, mask)


def smoothness_loss(p: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """(1 / (T - 1)) sum (p_t - p_{t-1})^2, averaged over leading axes"""
    p = torch.as_tensor(p, dtype=DTYPE)
    if p.dim() == 0 or p.shape[-1] < 2:
        raise InputError("smoothness_loss needs at least two frames")
    steps = (p[..., 1:] - p[..., :-1]) ** 2
    if mask is not None:
        mask = torch.as_tensor(mask)
        mask = mask[..., 1:] * mask[..., :-1]
    return _masked_mean(steps, mask)


def threshold_calibration_loss(p: torch.Tensor, entropy: torch.Tensor, context_vec: torch.Tensor,
                               lambdas: torch.Tensor, y: torch.Tensor, temperature: float = 0.05,
                               mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """
    Cross-entropy of sigmoid((p - tau) / temperature) against frame targets

    p, entropy and the context vector are detached, so only the threshold
    coefficients receive gradient.
    """
    tau = adaptive_threshold(entropy.detach(), context_vec.detach(), lambdas)
    logits = (p.detach() - tau) / temperature
    values = torch.nn.functional.binary_cross_entropy_with_logits(logits, y.to(DTYPE), reduction='none')
    return _masked_mean(values, mask)


def frame_targets(sequences: Sequence[ScenarioSequence], window_s: float) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Windowed frame targets and evaluation masks

    The mask drops frames after the collision of positive sequences.
    """
    targets = np.stack([label_frames(seq, window_s) for seq in sequences]).astype(np.float64)
    mask = np.ones_like(targets)
    for index, seq in enumerate(sequences):
        if seq.label:
            mask[index, seq.t_accident + 1:] = 0.0
    return torch.from_numpy(targets), torch.from_numpy(mask)


def compute_losses(output: ModelOutput, attention: torch.Tensor, targets: torch.Tensor, mask: torch.Tensor,
                   config: TrainConfig, lambdas: torch.Tensor) -> LossTerms:
    """All loss terms for one batch"""
    q = attention_target(attention, tuple(output.risk_maps.shape[-2:]))
    return LossTerms(
        focal=focal_loss(output.p, targets, config.focal_gamma, config.focal_alpha, mask),
        kl=kl_alignment(q, output.risk_maps, config.kl_direction, mask),
        smooth=smoothness_loss(output.p, mask),
        threshold=threshold_calibration_loss(output.p, output.entropy, output.context_vec, lambdas,
                                             targets, config.threshold_temperature, mask),
    )


def clip_gradients(named_parameters: Iterable[Tuple[str, torch.nn.Parameter]], max_norm: float) -> float:
    """
    Global-norm clipping in place

    Returns:
        The global gradient norm before clipping

    Raises:
        NonFiniteGradientError: naming the first parameter with a NaN/Inf gradient
    """
    named = [(name, param) for name, param in named_parameters if param.grad is not None]
    total = 0.0
    for name, param in named:
        if not bool(torch.isfinite(param.grad).all()):
            raise NonFiniteGradientError(name)
        total += float((param.grad * param.grad).sum())
    norm = math.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for _, param in named:
            param.grad.mul_(scale)
    return norm


def learning_rate(step: int, total_steps: int, warmup_steps: int, peak: float, final_fraction: float = 0.1) -> float:
    """Linear warmup to the peak, then cosine decay to final_fraction of the peak"""
    if warmup_steps > 0 and step < warmup_steps:
        return peak * (step + 1) / warmup_steps
    decay_steps = max(1, total_steps - warmup_steps - 1)
    progress = min(1.0, max(0, step - warmup_steps) / decay_steps)
    return peak * (final_fraction + (1.0 - final_fraction) * 0.5 * (1.0 + math.cos(math.pi * progress)))


def build_optimizer(model: CameraModel, config: TrainConfig) -> torch.optim.AdamW:
    """
    AdamW with one parameter group per top-level module

    Threshold coefficients get their own group without weight decay.
    """
    groups = []
    for name, named in model.parameter_groups().items():
        params = [param for pname, param in named if pname != 'head.lambdas']
        if params:
            groups.append({'params': params, 'name': name, 'lr_scale': float(config.lr_scale.get(name, 1.0)),
                           'weight_decay': config.weight_decay})
    groups.append({'params': [model.head.lambdas], 'name': 'threshold',
                   'lr_scale': float(config.lr_scale.get('threshold', 1.0)), 'weight_decay': 0.0})
    return torch.optim.AdamW(groups, lr=config.learning_rate, betas=ADAM_BETAS, eps=ADAM_EPS,
                             weight_decay=config.weight_decay)


def optimizer_step(model: CameraModel, optimizer: torch.optim.Optimizer, config: TrainConfig,
                   step: int, total_steps: int, warmup_steps: int) -> Dict[str, float]:
    """
    Clip, set the scheduled learning rate, apply AdamW and project lambda

    Returns:
        Dictionary with the step's learning rate and pre-clip gradient norm
    """
    norm = clip_gradients(model.named_parameters(), config.grad_clip)
    lr = learning_rate(step, total_steps, warmup_steps, config.learning_rate, config.final_lr_fraction)
    for group in optimizer.param_groups:
        group['lr'] = lr * group['lr_scale']
    optimizer.step()
    model.head.project_lambdas()
    return {'lr': lr, 'grad_norm': norm}


@dataclass
class TrainResult:
    model: CameraModel
    history: List[Dict] = field(default_factory=list)
    best_epoch: int = 0
    best_score: Optional[float] = None
    stopped_early: bool = False


def shuffle_stream(seed: int) -> Rng:
    """Batch-order generator: the seed's child after the per-module initialization streams"""
    return Rng(seed).spawn(len(MODULE_NAMES) + 1)[-1]


def split_validation(sequences: Sequence[ScenarioSequence], fraction: float
                     ) -> Tuple[List[ScenarioSequence], List[ScenarioSequence]]:
    """Hold out the last fraction of the list for validation (at least one training sequence)"""
    count = len(sequences)
    held = int(round(count * fraction)) if count > 1 else 0
    held = min(held, count - 1)
    return list(sequences[:count - held]), list(sequences[count - held:])


def validation_ap(model: CameraModel, sequences: Sequence[ScenarioSequence]) -> Optional[float]:
    if not sequences:
        return None
    try:
        return average_precision(sweep(model.trace(sequences)))
    except UndefinedMetricError:
        return None


class Trainer:
    """
    Deterministic training loop

    Args:
        config: Training settings
        model_config: Network settings
        log_path: Optional JSON-lines epoch log
        show_progress: tqdm bar over epochs
    """

    def __init__(self, config: Optional[TrainConfig] = None, model_config: Optional[ModelConfig] = None,
                 log_path: Optional[Union[str, Path]] = None, show_progress: Optional[bool] = None):
        self.config = (config or TrainConfig()).validate()
        self.model_config = (model_config or ModelConfig()).validate()
        self.log_path = Path(log_path) if log_path else None
        self.show_progress = Config.SHOW_PROGRESS if show_progress is None else show_progress

    def _log_epoch(self, record: Dict):
        logger.info(f"Epoch {record['epoch']}: loss={record['total']:.4f} focal={record['focal']:.4f} "
                    f"kl={record['kl']:.4f} smooth={record['smooth']:.4f} lr={record['lr']:.2e} "
                    f"val_ap={record['val_ap']}")
        if self.log_path:
            with open(self.log_path, 'a', encoding='utf-8') as f:
                f.write(json.dumps(record, sort_keys=True) + '\n')

    def train(self, sequences: Sequence[ScenarioSequence], model: Optional[CameraModel] = None) -> TrainResult:
        """
        Train a model on the sequences

        Args:
            sequences: Training sequences (the tail is held out for validation)
            model: Optional model to continue from; a fresh seeded model otherwise

        Returns:
            TrainResult with the best-validation model restored

        Raises:
            TrainingDiverged: Loss became non-finite; carries the last good state
        """
        cfg = self.config
        if not sequences:
            raise InputError("Training set is empty")
        train_set, val_set = split_validation(sequences, cfg.val_fraction)
        if cfg.window_s is not None:
            train_set = [window for seq in train_set for window in sliding_windows(seq, cfg.window_s, cfg.window_stride_s)]
        model = model or CameraModel(self.model_config, seed=cfg.seed, lambda_init=cfg.lambda_init)
        model.head.lambdas.requires_grad_(cfg.learn_thresholds)
        optimizer = build_optimizer(model, cfg)
        steps_per_epoch = math.ceil(len(train_set) / cfg.batch_size)
        total_steps = cfg.epochs * steps_per_epoch
        warmup_steps = cfg.warmup_epochs * steps_per_epoch
        shuffle_rng = shuffle_stream(cfg.seed)

        if self.log_path:
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            self.log_path.write_text('', encoding='utf-8')

        logger.info(f"Training {model.variant} model ({model.parameter_count()} parameters) on "
                    f"{len(train_set)} sequences, validating on {len(val_set)}")
        result = TrainResult(model=model)
        best_state = copy.deepcopy(model.state_dict())
        last_good = best_state
        stale = 0
        step = 0
        epochs = tqdm(range(1, cfg.epochs + 1), desc='Training', disable=not self.show_progress)
        for epoch in epochs:
            model.train()
            order = shuffle_rng.permutation(len(train_set))
            sums: Dict[str, float] = {}
            stats = {'lr': 0.0, 'grad_norm': 0.0}
            for start in range(0, len(order), cfg.batch_size):
                batch = [train_set[int(i)] for i in order[start:start + cfg.batch_size]]
                scene, tokens, attention = batch_tensors(batch)
                targets, mask = frame_targets(batch, cfg.label_window_s)
                optimizer.zero_grad(set_to_none=True)
                output = model(scene, tokens, attention)
                terms = compute_losses(output, attention, targets, mask, cfg, model.head.lambdas)
                total = terms.total
                if not bool(torch.isfinite(total)):
                    raise TrainingDiverged(f"Loss became non-finite at epoch {epoch}", last_good, epoch)
                objective = total + terms.threshold if cfg.learn_thresholds else total
                objective.backward()
                try:
                    stats = optimizer_step(model, optimizer, cfg, step, total_steps, warmup_steps)
                except NonFiniteGradientError as e:
                    raise TrainingDiverged(str(e), last_good, epoch) from e
                step += 1
                for key, value in terms.as_dict().items():
                    sums[key] = sums.get(key, 0.0) + value * len(batch)
            record = {key: value / len(train_set) for key, value in sums.items()}
            model.eval()
            val_ap = validation_ap(model, val_set)
            record.update({'epoch': epoch, 'lr': stats['lr'], 'grad_norm': stats['grad_norm'], 'val_ap': val_ap,
                           'lambda1': float(model.head.lambdas[0]), 'lambda2': float(model.head.lambdas[1])})
            result.history.append(record)
            self._log_epoch(record)
            last_good = copy.deepcopy(model.state_dict())

            score = val_ap if val_ap is not None else -record['total']
            if result.best_score is None or score > result.best_score:
                result.best_score = score
                result.best_epoch = epoch
                best_state = last_good
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    logger.info(f"Early stop at epoch {epoch}: no validation improvement for {cfg.patience} epochs")
                    result.stopped_early = True
                    break
        model.load_state_dict(best_state)
        model.eval()
        logger.info(f"Best epoch {result.best_epoch} (score {result.best_score})")
        return result


def train(sequences: Sequence[ScenarioSequence], config: Optional[TrainConfig] = None,
          model_config: Optional[ModelConfig] = None, log_path: Optional[Union[str, Path]] = None,
          show_progress: Optional[bool] = None) -> TrainResult:
    """Convenience wrapper around Trainer"""
    return Trainer(config, model_config, log_path, show_progress).train(sequences)


