#!/usr/bin/env python3
"""
Adaptive Hierarchical Fusion

Projects the three modality maps into a shared space, recalibrates each
over a softmax-weighted scale pyramid, fuses them with pairwise
co-activation gates and decomposes the result into visual-centric and
context-centric parts over K learned bases.
"""

from dataclasses import dataclass, field
from itertools import permutations
from typing import Dict, List, Sequence, Tuple

import torch
import torch.nn as nn

from .config import ModelConfig
from .exceptions import DimensionError
from .tensor_kernel import (
    Rng, conv2d, init_parameter, linear, pool, relu, sigmoid, softmax, upsample_nearest,
)

MODALITIES = ('scene', 'text', 'attention')
PAIRS: Tuple[Tuple[int, int], ...] = tuple(permutations(range(len(MODALITIES)), 2))
NORM_FLOOR = 1e-8


@dataclass
class AlignedFeatures:
    """Shared-space projections H_i and scale-aware recalibrations M_i"""
    projected: List[torch.Tensor]
    recalibrated: List[torch.Tensor]
    scale_weights: List[torch.Tensor] = field(default_factory=list)


@dataclass
class FusionOutput:
    visual: torch.Tensor  # (..., h, w, c)
    context_map: torch.Tensor  # (..., h, w, c)
    context_vec: torch.Tensor  # (..., c)
    fused: torch.Tensor
    gates: Dict[str, torch.Tensor] = field(default_factory=dict)


def check_modalities(features: Sequence[torch.Tensor]):
    if len(features) != len(MODALITIES):
        raise DimensionError(f"Expected {len(MODALITIES)} modality maps, got {len(features)}")
    shape = tuple(features[0].shape)
    for item in features[1:]:
        if tuple(item.shape) != shape:
            raise DimensionError(f"Modality maps differ in shape: {shape} vs {tuple(item.shape)}")


def cosine_gate(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """(1 + cos) / 2 between channel vectors at every position, norms floored at 1e-8"""
    dot = (a * b).sum(dim=-1)
    norms = a.norm(dim=-1).clamp(min=NORM_FLOOR) * b.norm(dim=-1).clamp(min=NORM_FLOOR)
    return (1.0 + dot / norms) / 2.0


class ScalePyramid(nn.Module):
    """Softmax-weighted pyramid of stride-2 convs for one modality"""

    def __init__(self, channels: int, levels: int, rng: Rng):
        super().__init__()
        self.kernels = nn.ParameterList(
            [init_parameter(rng, (3, 3, channels, channels), fan_in=9 * channels) for _ in range(levels - 1)])
        self.biases = nn.ParameterList([init_parameter(None, (channels,)) for _ in range(levels - 1)])
        self.logits = init_parameter(None, (levels,))

    def weights(self) -> torch.Tensor:
        return softmax(self.logits, axis=0)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        target = tuple(x.shape[-3:-1])
        weights = self.weights()
        level = x
        out = weights[0] * x
        for index, (kernel, bias) in enumerate(zip(self.kernels, self.biases), start=1):
            level = relu(conv2d(level, kernel, bias, stride=2))
            out = out + weights[index] * upsample_nearest(level, target)
        return out


class AdaptiveFusion(nn.Module):
    """
    Shared-space projection, scale recalibration, co-activation fusion and
    basis decomposition.

    Pair gates are keyed 'pair_i_j' for the ordered modality pair (i, j).
    """

    def __init__(self, config: ModelConfig, rng: Rng):
        super().__init__()
        c = config.channels
        self.channels = c
        self.proj_kernels = nn.ParameterList(
            [init_parameter(rng, (1, 1, c, c), fan_in=c) for _ in MODALITIES])
        self.proj_biases = nn.ParameterList([init_parameter(None, (c,)) for _ in MODALITIES])
        self.pyramids = nn.ModuleList([ScalePyramid(c, config.levels, rng) for _ in MODALITIES])
        self.pair_w1 = nn.ParameterDict()
        self.pair_b1 = nn.ParameterDict()
        self.pair_w2 = nn.ParameterDict()
        self.pair_b2 = nn.ParameterDict()
        for i, j in PAIRS:
            key = f'pair_{i}_{j}'
            self.pair_w1[key] = init_parameter(rng, (2 * c, c))
            self.pair_b1[key] = init_parameter(None, (c,))
            self.pair_w2[key] = init_parameter(rng, (c, c))
            self.pair_b2[key] = init_parameter(None, (c,))
        K = config.bases
        self.visual_bases = init_parameter(rng, (K, c, c), fan_in=c)
        self.visual_basis_bias = init_parameter(None, (K, c))
        self.context_bases = init_parameter(rng, (K, c, c), fan_in=c)
        self.context_basis_bias = init_parameter(None, (K, c))
        self.visual_w1 = init_parameter(rng, (c, c))
        self.visual_b1 = init_parameter(None, (c,))
        self.visual_w2 = init_parameter(rng, (c, K))
        self.visual_b2 = init_parameter(None, (K,))
        self.context_w1 = init_parameter(rng, (c, c))
        self.context_b1 = init_parameter(None, (c,))
        self.context_w2 = init_parameter(rng, (c, K))
        self.context_b2 = init_parameter(None, (K,))

    def align_and_recalibrate(self, features: Sequence[torch.Tensor]) -> AlignedFeatures:
        check_modalities(features)
        projected = [conv2d(f, kernel, bias) for f, kernel, bias in zip(features, self.proj_kernels, self.proj_biases)]
        recalibrated = [pyramid(h) for pyramid, h in zip(self.pyramids, projected)]
        return AlignedFeatures(projected, recalibrated, [pyramid.weights() for pyramid in self.pyramids])

    def pair_gate(self, i: int, j: int, m_i: torch.Tensor, m_j: torch.Tensor) -> torch.Tensor:
        """beta_ij in (0, 1)^c from the pooled recalibrated maps of the pair"""
        key = f'pair_{i}_{j}'
        pooled = torch.cat([pool(m_i, 'global-avg'), pool(m_j, 'global-avg')], dim=-1)
        hidden = relu(linear(pooled, self.pair_w1[key], self.pair_b1[key]))
        return sigmoid(linear(hidden, self.pair_w2[key], self.pair_b2[key]))

    def coat_fuse(self, aligned: AlignedFeatures, gates: Dict[str, torch.Tensor] = None) -> torch.Tensor:
        H, M = aligned.projected, aligned.recalibrated
        pair_sum = 0.0
        for i, j in PAIRS:
            beta = self.pair_gate(i, j, M[i], M[j])
            gamma = cosine_gate(M[i], M[j])
            if gates is not None:
                gates[f'beta_{i}_{j}'] = beta
                gates[f'gamma_{i}_{j}'] = gamma
            pair_sum = pair_sum + beta[..., None, None, :] * (gamma.unsqueeze(-1) * H[i])
        residual = sum(H) / len(H)
        return pair_sum / len(PAIRS) + residual

    def _decompose(self, fused: torch.Tensor, bases, basis_bias, w1, b1, w2, b2) -> Tuple[torch.Tensor, torch.Tensor]:
        alpha = softmax(linear(relu(linear(pool(fused, 'global-avg'), w1, b1)), w2, b2), axis=-1)
        projected = torch.einsum('...hwc,kcd->...khwd', fused, bases) + basis_bias[:, None, None, :]
        return (alpha[..., :, None, None, None] * projected).sum(dim=-4), alpha

    def biba_decompose(self, fused: torch.Tensor, gates: Dict[str, torch.Tensor] = None
                       ) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        visual, alpha_v = self._decompose(fused, self.visual_bases, self.visual_basis_bias,
                                          self.visual_w1, self.visual_b1, self.visual_w2, self.visual_b2)
        context_map, alpha_c = self._decompose(fused, self.context_bases, self.context_basis_bias,
                                               self.context_w1, self.context_b1, self.context_w2, self.context_b2)
        if gates is not None:
            gates['alpha_visual'] = alpha_v
            gates['alpha_context'] = alpha_c
        return visual, context_map, pool(context_map, 'global-avg')

    def forward(self, features: Sequence[torch.Tensor], keep_gates: bool = False) -> FusionOutput:
        gates: Dict[str, torch.Tensor] = {} if keep_gates else None
        aligned = self.align_and_recalibrate(features)
        fused = self.coat_fuse(aligned, gates)
        visual, context_map, context_vec = self.biba_decompose(fused, gates)
        if gates is not None:
            for index, weights in enumerate(aligned.scale_weights):
                gates[f'scale_weights_{index}'] = weights
        return FusionOutput(visual, context_map, context_vec, fused, gates or {})


class MeanFusion(nn.Module):
    """Fusion bypass: plain mean of the modality maps feeds both heads"""

    def forward(self, features: Sequence[torch.Tensor], keep_gates: bool = False) -> FusionOutput:
        check_modalities(features)
        fused = sum(features) / len(features)
        return FusionOutput(fused, fused, pool(fused, 'global-avg'), fused, {})
