#!/usr/bin/env python3
"""
Modality Encoders

Maps per-frame inputs to three aligned h x w x c feature maps: the scene
grid (conv stack), the scenario tokens (embedding, mean pool, positional
grid) and the driver attention map (dual-stage attention refiner over a
4-level pyramid).
"""

import logging
from typing import Dict, Optional, Tuple, Union

import torch
import torch.nn as nn

from .config import ModelConfig
from .exceptions import DimensionError, InputError
from .scenario_vocabulary import PAD_ID
from .tensor_kernel import (
    Rng, conv2d, downsample_mean, init_parameter, linear, pool, relu, sigmoid, softmax, upsample_nearest,
)

logger = logging.getLogger(__name__)


class SceneEncoder(nn.Module):
    """3x3 conv stack with relu; the leading layers halve the resolution"""

    def __init__(self, config: ModelConfig, rng: Rng):
        super().__init__()
        self.grid_size = config.grid_size
        steps = config.downsample_steps
        layers = max(3, steps)
        self.strides = [2] * steps + [1] * (layers - steps)
        self.kernels = nn.ParameterList()
        self.biases = nn.ParameterList()
        cin = 3
        for _ in range(layers):
            self.kernels.append(init_parameter(rng, (3, 3, cin, config.channels), fan_in=9 * cin))
            self.biases.append(init_parameter(None, (config.channels,)))
            cin = config.channels

    def forward(self, scene: torch.Tensor) -> torch.Tensor:
        if scene.dim() < 3 or tuple(scene.shape[-3:]) != (self.grid_size, self.grid_size, 3):
            raise DimensionError(f"Scene grid must end in ({self.grid_size}, {self.grid_size}, 3), "
                                 f"got {tuple(scene.shape)}")
        x = scene
        for kernel, bias, stride in zip(self.kernels, self.biases, self.strides):
            x = relu(conv2d(x, kernel, bias, stride=stride))
        return x


class TextEncoder(nn.Module):
    """Token embedding, mean pool over non-pad ids, linear map, broadcast plus positional grid"""

    def __init__(self, config: ModelConfig, rng: Rng):
        super().__init__()
        c, h = config.channels, config.feature_size
        self.vocab_size = config.vocab_size
        self.embedding = init_parameter(rng, (config.vocab_size, c), fan_in=c)
        self.weight = init_parameter(rng, (c, c))
        self.bias = init_parameter(None, (c,))
        self.positional = init_parameter(rng, (h, h, c), fan_in=c)

    def pooled(self, tokens: torch.Tensor) -> torch.Tensor:
        """Mean embedding of the non-pad tokens, (..., c); zero for all-pad input"""
        if tokens.dtype.is_floating_point:
            raise InputError("Token ids must be integers")
        if tokens.numel() and (int(tokens.min()) < 0 or int(tokens.max()) >= self.vocab_size):
            raise InputError(f"Token id out of range [0, {self.vocab_size})")
        mask = (tokens != PAD_ID).to(self.embedding.dtype).unsqueeze(-1)
        summed = (self.embedding[tokens] * mask).sum(dim=-2)
        count = mask.sum(dim=-2).clamp(min=1.0)
        return summed / count

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        vector = linear(self.pooled(tokens), self.weight, self.bias)
        return vector[..., None, None, :] + self.positional


class ChannelAttention(nn.Module):
    """A_ch = sigmoid(MLP(global-avg) + MLP(global-max)), shared two-layer MLP"""

    def __init__(self, channels: int, reduction: int, rng: Rng):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.w1 = init_parameter(rng, (channels, hidden))
        self.b1 = init_parameter(None, (hidden,))
        self.w2 = init_parameter(rng, (hidden, channels))
        self.b2 = init_parameter(None, (channels,))

    def mlp(self, x: torch.Tensor) -> torch.Tensor:
        return linear(relu(linear(x, self.w1, self.b1)), self.w2, self.b2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return sigmoid(self.mlp(pool(x, 'global-avg')) + self.mlp(pool(x, 'global-max')))


class SpatialAttention(nn.Module):
    """A_sp = sigmoid(conv3x3([channel-avg; channel-max]))"""

    def __init__(self, rng: Rng):
        super().__init__()
        self.kernel = init_parameter(rng, (3, 3, 2, 1), fan_in=18)
        self.bias = init_parameter(None, (1,))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        stacked = torch.stack([pool(x, 'channel-avg'), pool(x, 'channel-max')], dim=-1)
        return sigmoid(conv2d(stacked, self.kernel, self.bias, pad_mode='replicate'))[..., 0]


class DualAttention(nn.Module):
    """Channel scaling followed by per-position scaling"""

    def __init__(self, channels: int, reduction: int, rng: Rng):
        super().__init__()
        self.channel = ChannelAttention(channels, reduction, rng)
        self.spatial = SpatialAttention(rng)

    def forward(self, x: torch.Tensor, trace: Optional[Dict] = None, key: str = '') -> torch.Tensor:
        a_ch = self.channel(x)
        x = x * a_ch[..., None, None, :]
        a_sp = self.spatial(x)
        if trace is not None:
            trace[f'{key}channel_attention'] = a_ch
            trace[f'{key}spatial_attention'] = a_sp
        return x * a_sp.unsqueeze(-1)


class AttentionRefiner(nn.Module):
    """
    Dual-stage attention refiner for driver attention maps

    The single-channel map is lifted to c0 channels by a 3x3 conv, refined by
    channel then spatial attention, brought down to h x w by stride-2 convs,
    expanded into a pyramid of `levels` stride-2 levels that are each refined
    again, and fused by softmax-weighted nearest upsampling. A final 1x1
    conv maps c0 to c channels. All convs use replicate padding.
    """

    def __init__(self, config: ModelConfig, rng: Rng):
        super().__init__()
        c0 = config.lift_channels
        self.grid_size = config.grid_size
        self.feature_size = config.feature_size
        self.lift_kernel = init_parameter(rng, (3, 3, 1, c0), fan_in=9)
        self.lift_bias = init_parameter(None, (c0,))
        self.attention = DualAttention(c0, config.reduction, rng)
        self.down_kernels = nn.ParameterList(
            [init_parameter(rng, (3, 3, c0, c0), fan_in=9 * c0) for _ in range(config.downsample_steps)])
        self.down_biases = nn.ParameterList(
            [init_parameter(None, (c0,)) for _ in range(config.downsample_steps)])
        self.level_kernels = nn.ParameterList(
            [init_parameter(rng, (3, 3, c0, c0), fan_in=9 * c0) for _ in range(config.levels - 1)])
        self.level_biases = nn.ParameterList(
            [init_parameter(None, (c0,)) for _ in range(config.levels - 1)])
        self.level_attention = nn.ModuleList(
            [DualAttention(c0, config.reduction, rng) for _ in range(config.levels)])
        self.level_logits = init_parameter(None, (config.levels,))
        self.out_kernel = init_parameter(rng, (1, 1, c0, config.channels), fan_in=c0)
        self.out_bias = init_parameter(None, (config.channels,))

    @staticmethod
    def normalize_map(attention: torch.Tensor) -> torch.Tensor:
        """Scale each map to unit mean; rejects negative or all-zero maps"""
        if attention.dim() < 2:
            raise DimensionError(f"Attention map must be (..., H, W), got {tuple(attention.shape)}")
        if bool((attention < 0).any()):
            raise InputError("Attention map has negative entries")
        mean = attention.mean(dim=(-2, -1), keepdim=True)
        if bool((mean <= 0).any()):
            raise InputError("Attention map is all zero")
        return attention / mean

    def level_weights(self) -> torch.Tensor:
        return softmax(self.level_logits, axis=0)

    def forward(self, attention: torch.Tensor, return_intermediates: bool = False
                ) -> Union[torch.Tensor, Tuple[torch.Tensor, Dict[str, torch.Tensor]]]:
        if tuple(attention.shape[-2:]) != (self.grid_size, self.grid_size):
            raise DimensionError(f"Attention map must end in ({self.grid_size}, {self.grid_size}), "
                                 f"got {tuple(attention.shape)}")
        trace: Optional[Dict] = {} if return_intermediates else None
        x = self.normalize_map(attention).unsqueeze(-1)
        lifted = conv2d(x, self.lift_kernel, self.lift_bias, pad_mode='replicate')
        x = self.attention(lifted, trace)
        for kernel, bias in zip(self.down_kernels, self.down_biases):
            x = relu(conv2d(x, kernel, bias, stride=2, pad_mode='replicate'))
        levels = [x]
        for kernel, bias in zip(self.level_kernels, self.level_biases):
            levels.append(relu(conv2d(levels[-1], kernel, bias, stride=2, pad_mode='replicate')))
        weights = self.level_weights()
        target = (self.feature_size, self.feature_size)
        fused = 0.0
        refined_levels = []
        for index, (level, refine) in enumerate(zip(levels, self.level_attention)):
            refined = refine(level, trace, key=f'level{index}_')
            refined_levels.append(refined)
            fused = fused + weights[index] * upsample_nearest(refined, target)
        out = conv2d(fused, self.out_kernel, self.out_bias)
        if trace is None:
            return out
        trace.update({'lifted': lifted, 'levels': refined_levels, 'level_weights': weights, 'fused': fused})
        return out, trace


class PooledAttentionEncoder(nn.Module):
    """Refiner bypass: average-pool the map to h x w and lift with a 1x1 conv"""

    def __init__(self, config: ModelConfig, rng: Rng):
        super().__init__()
        self.grid_size = config.grid_size
        self.feature_size = config.feature_size
        self.kernel = init_parameter(rng, (1, 1, 1, config.channels), fan_in=1)
        self.bias = init_parameter(None, (config.channels,))

    def forward(self, attention: torch.Tensor) -> torch.Tensor:
        if tuple(attention.shape[-2:]) != (self.grid_size, self.grid_size):
            raise DimensionError(f"Attention map must end in ({self.grid_size}, {self.grid_size})")
        x = AttentionRefiner.normalize_map(attention)
        x = downsample_mean(x, (self.feature_size, self.feature_size)).unsqueeze(-1)
        return conv2d(x, self.kernel, self.bias)
