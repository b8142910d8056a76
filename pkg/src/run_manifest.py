#!/usr/bin/env python3
"""
Run configuration and manifests

A RunConfig is the resolved union of environment defaults, an optional
key=value config file and the command-line flags (flags win). Every run
writes a manifest holding the resolved configuration, the seed and
SHA-256 checksums of its artifacts, enough to replay the run.
"""

import json
import logging
import platform
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np
import torch

from .config import (Config, EvalConfig, ModelConfig, ScenarioConfig, SECTIONS, TrainConfig,
                     apply_overrides, config_to_dict, load_config_file)
from .exceptions import ConfigError
from .utils.helpers import file_checksum

logger = logging.getLogger(__name__)

MANIFEST_SUFFIX = '.manifest.json'
MANIFEST_VERSION = 1


@dataclass
class RunConfig:
    command: str
    seed: int = 42
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    options: Dict[str, Any] = field(default_factory=dict)
    config_path: Optional[str] = None

    def validate(self):
        for name in SECTIONS:
            getattr(self, name).validate()
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        return self

    def to_dict(self) -> Dict[str, Any]:
        data = {'command': self.command, 'seed': self.seed, 'options': dict(sorted(self.options.items()))}
        for name in SECTIONS:
            data[name] = config_to_dict(getattr(self, name))
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunConfig':
        """Rebuild a RunConfig from its to_dict() form"""
        try:
            run = cls(command=data['command'], seed=int(data['seed']), options=dict(data.get('options', {})))
            for name, section in SECTIONS.items():
                values = dict(data.get(name, {}))
                known = {f.name for f in fields(section)}
                unknown = set(values) - known
                if unknown:
                    raise ConfigError(f"Unknown {name} settings in manifest: {sorted(unknown)}")
                for key, value in values.items():
                    if isinstance(getattr(section, key, None), tuple):
                        values[key] = tuple(value)
                setattr(run, name, section(**values))
        except (KeyError, TypeError) as e:
            raise ConfigError(f"Malformed run configuration: {e}") from e
        return run.validate()


def resolve_run_config(command: str, flags: Dict[str, Any], config_path: Optional[str] = None) -> RunConfig:
    """
    Resolve a run configuration

    Args:
        command: Subcommand name
        flags: Explicitly given flags; dotted keys ('train.epochs') target a
            config section, bare keys are run options ('seed', 'out', ...)
        config_path: Optional key=value config file

    Returns:
        Validated RunConfig
    """
    run = RunConfig(command=command, seed=Config.SEED, config_path=config_path)
    sections = load_config_file(config_path) if config_path else None
    if sections:
        for name in SECTIONS:
            apply_overrides(getattr(run, name), sections[name])
        for key, value in sections['run'].items():
            if key == 'seed':
                run.seed = _parse_seed(value)
            else:
                run.options[key] = value
    for key, value in flags.items():
        if value is None:
            continue
        section, _, name = key.partition('.')
        if name:
            if section not in SECTIONS:
                raise ConfigError(f"Unknown config section {section!r}")
            target = getattr(run, section)
            if name not in {f.name for f in fields(target)}:
                raise ConfigError(f"Unknown setting {key!r}")
            setattr(target, name, value)
        elif key == 'seed':
            run.seed = _parse_seed(value)
        else:
            run.options[key] = value
    # the run seed drives training unless the file pinned train.seed
    if not (sections and 'seed' in sections['train']) and 'train.seed' not in flags:
        run.train.seed = run.seed
    return run.validate()


def _parse_seed(value: Union[str, int]) -> int:
    try:
        seed = int(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"seed must be an integer, got {value!r}") from e
    return seed


def manifest_path(out_path: Union[str, Path]) -> Path:
    """Manifest location for a run whose primary artifact is out_path"""
    out_path = Path(out_path)
    return out_path.with_name(out_path.name + MANIFEST_SUFFIX)


def checksums(paths: Sequence[Union[str, Path]]) -> Dict[str, str]:
    """SHA-256 of every artifact file (directories are walked in sorted order)"""
    result = {}
    for path in paths:
        path = Path(path)
        if path.is_dir():
            for child in sorted(p for p in path.rglob('*') if p.is_file()):
                result[child.as_posix()] = file_checksum(child)
        elif path.exists():
            result[path.as_posix()] = file_checksum(path)
    return result


def write_manifest(run: RunConfig, artifacts: Sequence[Union[str, Path]], out_path: Union[str, Path]) -> Path:
    """
    Write the manifest of a finished run next to its primary artifact

    Args:
        run: Resolved run configuration
        artifacts: Files or directories produced by the run
        out_path: Primary artifact (the --out path)

    Returns:
        Manifest path
    """
    path = manifest_path(out_path)
    data = {
        'manifest_version': MANIFEST_VERSION,
        'run': run.to_dict(),
        'artifacts': checksums(artifacts),
        'environment': {
            'python': platform.python_version(),
            'torch': torch.__version__,
            'numpy': np.__version__,
            'threads': torch.get_num_threads(),
        },
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, sort_keys=True, indent=2) + '\n', encoding='utf-8')
    logger.info(f"Wrote manifest {path} ({len(data['artifacts'])} artifacts)")
    return path


def load_manifest(path: Union[str, Path]) -> RunConfig:
    """Resolved RunConfig stored in a manifest"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Manifest not found: {path}")
    try:
        data = json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        raise ConfigError(f"Manifest {path} is not valid JSON: {e}") from e
    if data.get('manifest_version') != MANIFEST_VERSION:
        raise ConfigError(f"Unsupported manifest version {data.get('manifest_version')}")
    return RunConfig.from_dict(data['run'])
