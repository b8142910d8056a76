"""
Configuration module for the CAMERA accident-anticipation pipeline
"""
import os
import math
from dataclasses import dataclass, field, fields, asdict
from typing import Dict, Optional, Tuple

from dotenv import load_dotenv, dotenv_values

from .exceptions import ConfigError

# Load environment variables from .env file
load_dotenv()


class Config:
    """Environment-level defaults for the application"""

    # Determinism
    SEED = int(os.getenv('CAMERA_SEED', 42))
    THREADS = int(os.getenv('CAMERA_THREADS', 1))

    # Artifacts
    DATA_DIR = os.getenv('CAMERA_DATA_DIR', 'data')

    # Console output
    SHOW_PROGRESS = os.getenv('CAMERA_SHOW_PROGRESS', 'True').lower() == 'true'
    LOG_LEVEL = os.getenv('CAMERA_LOG_LEVEL', 'INFO').upper()

    @classmethod
    def is_seed_overridden(cls):
        """Check if the default seed comes from the environment"""
        return 'CAMERA_SEED' in os.environ

    @classmethod
    def get_data_path(cls, filename):
        """Resolve a file name inside the data directory"""
        return os.path.join(cls.DATA_DIR, filename)


@dataclass
class ScenarioConfig:
    """Synthetic traffic-scenario generator settings"""
    frames: int = 64
    fps: int = 10
    grid_size: int = 32
    token_length: int = 32
    collision_radius: float = 1.0
    distraction_rate: float = 0.3
    min_distractors: int = 1
    max_distractors: int = 3
    hazard_bigram_positive: float = 0.7
    hazard_bigram_negative: float = 0.2
    label_window_s: float = 3.0

    def validate(self):
        if self.frames < 2:
            raise ConfigError(f"scenario.frames must be >= 2, got {self.frames}")
        if self.fps < 1:
            raise ConfigError(f"scenario.fps must be >= 1, got {self.fps}")
        if self.grid_size < 8 or self.grid_size % 4:
            raise ConfigError(f"scenario.grid_size must be a multiple of 4 and >= 8, got {self.grid_size}")
        if self.token_length < 4:
            raise ConfigError(f"scenario.token_length must be >= 4, got {self.token_length}")
        if self.collision_radius <= 0:
            raise ConfigError("scenario.collision_radius must be positive")
        if self.frames < 2 * self.fps + 6:
            raise ConfigError("scenario.frames too short for a 2 s precursor")
        for name in ('distraction_rate', 'hazard_bigram_positive', 'hazard_bigram_negative'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"scenario.{name} must be in [0, 1], got {value}")
        if not 0 <= self.min_distractors <= self.max_distractors:
            raise ConfigError("scenario distractor counts must satisfy 0 <= min <= max")
        if self.label_window_s <= 0:
            raise ConfigError("scenario.label_window_s must be positive")
        return self


@dataclass
class ModelConfig:
    """Network sizes and the module-knockout variant"""
    grid_size: int = 32
    feature_size: int = 8
    channels: int = 16
    lift_channels: int = 8
    hidden_size: int = 16
    bases: int = 4
    levels: int = 4
    vocab_size: int = 64
    reduction: int = 4
    variant: str = 'full'

    VARIANTS = ('full', 'no_mfe', 'no_ahf', 'no_bigru')

    def validate(self):
        if self.variant not in self.VARIANTS:
            raise ConfigError(f"model.variant must be one of {self.VARIANTS}, got {self.variant!r}")
        if self.grid_size % self.feature_size:
            raise ConfigError("model.grid_size must be a multiple of model.feature_size")
        ratio = self.grid_size // self.feature_size
        if ratio & (ratio - 1):
            raise ConfigError("model.grid_size / model.feature_size must be a power of two")
        if self.feature_size < 2 ** (self.levels - 1):
            raise ConfigError("model.feature_size too small for the pyramid depth")
        if self.channels % 4 or self.channels < 4:
            raise ConfigError("model.channels must be a positive multiple of 4")
        for name in ('lift_channels', 'hidden_size', 'bases', 'levels', 'vocab_size'):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name} must be positive")
        if self.lift_channels < self.reduction:
            raise ConfigError("model.lift_channels must be >= model.reduction")
        return self

    @property
    def downsample_steps(self) -> int:
        return int(round(math.log2(self.grid_size // self.feature_size)))


@dataclass
class TrainConfig:
    """Optimizer, schedule and loss settings"""
    epochs: int = 50
    batch_size: int = 2
    learning_rate: float = 1e-3
    warmup_epochs: int = 5
    final_lr_fraction: float = 0.1
    weight_decay: float = 0.01
    grad_clip: float = 1.0
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    seed: int = 42
    patience: int = 10
    val_fraction: float = 0.2
    label_window_s: float = 3.0
    window_s: Optional[float] = None
    window_stride_s: float = 1.0
    kl_direction: str = 'attention_to_risk'
    learn_thresholds: bool = True
    threshold_temperature: float = 0.05
    lambda_init: Tuple[float, float] = (0.1, 0.1)
    lr_scale: Dict[str, float] = field(default_factory=dict)

    KL_DIRECTIONS = ('attention_to_risk', 'risk_to_attention')

    def validate(self):
        for name in ('epochs', 'batch_size'):
            if getattr(self, name) < 1:
                raise ConfigError(f"train.{name} must be positive")
        for name in ('learning_rate', 'grad_clip', 'threshold_temperature', 'label_window_s', 'window_stride_s'):
            if getattr(self, name) <= 0:
                raise ConfigError(f"train.{name} must be positive")
        if self.warmup_epochs < 0 or self.patience < 1:
            raise ConfigError("train.warmup_epochs must be >= 0 and train.patience >= 1")
        if self.weight_decay < 0 or self.focal_gamma < 0:
            raise ConfigError("train.weight_decay and train.focal_gamma must be >= 0")
        if not 0.0 < self.focal_alpha < 1.0:
            raise ConfigError("train.focal_alpha must be in (0, 1)")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("train.val_fraction must be in [0, 1)")
        if not 0.0 < self.final_lr_fraction <= 1.0:
            raise ConfigError("train.final_lr_fraction must be in (0, 1]")
        if self.kl_direction not in self.KL_DIRECTIONS:
            raise ConfigError(f"train.kl_direction must be one of {self.KL_DIRECTIONS}")
        if self.window_s is not None and self.window_s <= 0:
            raise ConfigError("train.window_s must be positive when set")
        if len(self.lambda_init) != 2 or not all(0.0 <= v <= 0.2 for v in self.lambda_init):
            raise ConfigError("train.lambda_init must hold two values in [0, 0.2]")
        return self


@dataclass
class EvalConfig:
    """Evaluation protocol switches"""
    causal: bool = False
    tta_mode: str = 'sweep'
    fixed_theta: float = 0.5
    static_threshold: float = 0.5
    label_window_s: float = 3.0

    def validate(self):
        if self.tta_mode not in ('sweep', 'fixed'):
            raise ConfigError(f"eval.tta_mode must be 'sweep' or 'fixed', got {self.tta_mode!r}")
        if not 0.0 <= self.fixed_theta <= 1.0 or not 0.0 <= self.static_threshold <= 1.0:
            raise ConfigError("eval thresholds must be in [0, 1]")
        return self


SECTIONS = {
    'scenario': ScenarioConfig,
    'model': ModelConfig,
    'train': TrainConfig,
    'eval': EvalConfig,
}


def _coerce(value: str, current):
    """Convert a config-file string to the type of the current field value"""
    if isinstance(current, bool):
        lowered = value.strip().lower()
        if lowered not in ('true', 'false', '1', '0', 'yes', 'no'):
            raise ConfigError(f"Expected a boolean, got {value!r}")
        return lowered in ('true', '1', 'yes')
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float) or current is None:
        if current is None and value.strip().lower() in ('', 'none'):
            return None
        return float(value)
    if isinstance(current, tuple):
        return tuple(float(part) for part in value.split(','))
    if isinstance(current, dict):
        pairs = [item.split(':', 1) for item in value.split(',') if item.strip()]
        return {key.strip(): float(scale) for key, scale in pairs}
    return value.strip()


def apply_overrides(config, values: Dict[str, str]):
    """
    Apply string overrides onto a dataclass config

    Args:
        config: Dataclass instance to update in place
        values: Mapping of field name to string value

    Returns:
        The same config instance
    """
    known = {f.name for f in fields(config)}
    for key, value in values.items():
        if key not in known:
            raise ConfigError(f"Unknown setting {key!r} for {type(config).__name__}")
        try:
            setattr(config, key, _coerce(value, getattr(config, key)))
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"Invalid value {value!r} for {key}: {e}") from e
    return config


def load_config_file(path: str) -> Dict[str, Dict[str, str]]:
    """
    Read a key=value config file ('#' comments) into per-section mappings

    Args:
        path: Config file path

    Returns:
        Dictionary keyed by section name ('scenario', 'model', 'train',
        'eval', 'run') with raw string values
    """
    if not os.path.exists(path):
        raise ConfigError(f"Config file not found: {path}")
    raw = dotenv_values(path)
    sections: Dict[str, Dict[str, str]] = {name: {} for name in list(SECTIONS) + ['run']}
    for key, value in raw.items():
        if value is None:
            raise ConfigError(f"Config key {key!r} has no value")
        section, _, name = key.partition('.')
        if not name:
            sections['run'][key] = value
        elif section in sections:
            sections[section][name] = value
        else:
            raise ConfigError(f"Unknown config section in key {key!r}")
    return sections


def config_to_dict(config) -> Dict:
    """Plain-dict view of a dataclass config (tuples become lists)"""
    data = asdict(config)
    for key, value in data.items():
        if isinstance(value, tuple):
            data[key] = list(value)
    return data
