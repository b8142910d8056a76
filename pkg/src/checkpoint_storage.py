#!/usr/bin/env python3
"""
Model checkpoint storage ("CAMR" format)

    magic "CAMR" | version u32 | tensor count u32 |
    per tensor: name length u16 | UTF-8 name | rank u8 | dims u32[rank] | values f64[prod(dims)]

All integers little-endian. The model configuration travels as rank-1
tensors named "meta.<field>" so a checkpoint rebuilds its own model; the
initialization seed is "meta.seed", stored as its high and low 32-bit halves.
"""

import logging
import math
import struct
from collections import OrderedDict
from dataclasses import fields
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
import torch

from .config import ModelConfig
from .exceptions import ParseError, VersionError
from .model import CameraModel
from .tensor_kernel import DTYPE

logger = logging.getLogger(__name__)

MAGIC = b'CAMR'
FORMAT_VERSION = 1
META_PREFIX = 'meta.'
SEED_HALF_MASK = 0xFFFFFFFF


def encode_tensors(tensors: Dict[str, torch.Tensor]) -> bytes:
    parts = [struct.pack('<4sII', MAGIC, FORMAT_VERSION, len(tensors))]
    for name, tensor in tensors.items():
        encoded = name.encode('utf-8')
        values = tensor.detach().to(DTYPE).contiguous().numpy()
        parts.append(struct.pack('<H', len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack('<B', values.ndim))
        parts.append(struct.pack(f'<{values.ndim}I', *values.shape))
        parts.append(values.astype('<f8').tobytes())
    return b''.join(parts)


def decode_tensors(data: bytes) -> 'OrderedDict[str, torch.Tensor]':
    """
    Parse a CAMR byte string

    Raises:
        VersionError: wrong magic or version
        ParseError: truncated or inconsistent data, with the byte offset
    """
    offset = 0

    def take(size: int, what: str) -> bytes:
        nonlocal offset
        if offset + size > len(data):
            raise ParseError(f"Unexpected end of checkpoint while reading {what}", offset)
        chunk = data[offset:offset + size]
        offset += size
        return chunk

    magic, version, count = struct.unpack('<4sII', take(12, 'header'))
    if magic != MAGIC:
        raise VersionError(f"Not a checkpoint file (magic {magic!r})")
    if version != FORMAT_VERSION:
        raise VersionError(f"Unsupported checkpoint version {version} (expected {FORMAT_VERSION})")
    tensors = OrderedDict()
    for _ in range(count):
        start = offset
        (length,) = struct.unpack('<H', take(2, 'name length'))
        try:
            name = take(length, 'tensor name').decode('utf-8')
        except UnicodeDecodeError as e:
            raise ParseError("Tensor name is not valid UTF-8", start + 2) from e
        (rank,) = struct.unpack('<B', take(1, 'rank'))
        dims = struct.unpack(f'<{rank}I', take(4 * rank, 'dims'))
        size = math.prod(dims)
        values = np.frombuffer(take(8 * size, f'values of {name}'), dtype='<f8').astype(np.float64)
        if name in tensors:
            raise ParseError(f"Duplicate tensor {name!r}", start)
        tensors[name] = torch.from_numpy(values.reshape(dims))
    if offset != len(data):
        raise ParseError("Trailing bytes after last tensor", offset)
    return tensors


def _meta_tensors(model: CameraModel) -> Dict[str, torch.Tensor]:
    meta = {}
    for item in fields(ModelConfig):
        value = getattr(model.config, item.name)
        if item.name == 'variant':
            value = ModelConfig.VARIANTS.index(value)
        meta[f'{META_PREFIX}{item.name}'] = torch.tensor([float(value)], dtype=DTYPE)
    # high and low 32-bit halves; a float64 holds each exactly
    meta[f'{META_PREFIX}seed'] = torch.tensor([float(model.seed >> 32), float(model.seed & SEED_HALF_MASK)],
                                              dtype=DTYPE)
    return meta


def _meta_integers(tensor: torch.Tensor, name: str, count: int = 1) -> List[int]:
    if tensor.numel() != count:
        raise ParseError(f"{META_PREFIX}{name} must hold {count} value(s), got {tensor.numel()}", 0)
    numbers = []
    for value in tensor.reshape(-1).tolist():
        if not math.isfinite(value) or value != round(value):
            raise ParseError(f"Bad {META_PREFIX}{name} {value}", 0)
        numbers.append(int(value))
    return numbers


def _config_from_meta(tensors: Dict[str, torch.Tensor]) -> Tuple[ModelConfig, int]:
    values = {}
    for item in fields(ModelConfig):
        key = f'{META_PREFIX}{item.name}'
        if key not in tensors:
            raise ParseError(f"Checkpoint lacks {key}", 0)
        (number,) = _meta_integers(tensors[key], item.name)
        if item.name == 'variant':
            if not 0 <= number < len(ModelConfig.VARIANTS):
                raise ParseError(f"Bad {key} {number}", 0)
            values[item.name] = ModelConfig.VARIANTS[number]
        else:
            values[item.name] = number
    key = f'{META_PREFIX}seed'
    if key not in tensors:
        raise ParseError(f"Checkpoint lacks {key}", 0)
    high, low = _meta_integers(tensors[key], 'seed', count=2)
    if not (0 <= high <= SEED_HALF_MASK and 0 <= low <= SEED_HALF_MASK):
        raise ParseError(f"Bad {key} halves ({high}, {low})", 0)
    return ModelConfig(**values), (high << 32) | low


class CheckpointStorage:
    """Saves and restores CameraModel parameters"""

    def save(self, path: Union[str, Path], model: CameraModel):
        tensors = OrderedDict(_meta_tensors(model))
        tensors.update(model.state_dict())
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_tensors(tensors))
        logger.info(f"Saved checkpoint with {len(tensors)} tensors to {path}")

    def load(self, path: Union[str, Path]) -> CameraModel:
        """
        Rebuild the model stored in a checkpoint

        Returns:
            CameraModel in eval mode
        """
        tensors = decode_tensors(Path(path).read_bytes())
        config, seed = _config_from_meta(tensors)
        model = CameraModel(config, seed=seed)
        state = OrderedDict((name, value) for name, value in tensors.items() if not name.startswith(META_PREFIX))
        expected = model.state_dict()
        missing = [name for name in expected if name not in state]
        if missing or len(state) != len(expected):
            raise ParseError(f"Checkpoint tensors do not match the model (missing {missing[:3]})", 0)
        for name, value in state.items():
            if tuple(value.shape) != tuple(expected[name].shape):
                raise ParseError(f"Tensor {name} has shape {tuple(value.shape)}, "
                                 f"model expects {tuple(expected[name].shape)}", 0)
        model.load_state_dict(state)
        model.eval()
        logger.info(f"Loaded {model.variant} checkpoint from {path}")
        return model


# Global instance
checkpoint_storage = CheckpointStorage()
