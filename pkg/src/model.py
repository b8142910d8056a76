#!/usr/bin/env python3
"""
End-to-end risk model

Wires the encoders, fusion, temporal recurrence and risk head together and
swaps in the bypass modules for the knockout variants.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn

from .config import ModelConfig
from .encoders import AttentionRefiner, PooledAttentionEncoder, SceneEncoder, TextEncoder
from .exceptions import DimensionError
from .fusion import AdaptiveFusion, FusionOutput, MeanFusion
from .risk_head import RiskHead, RiskTrace, attention_entropy
from .scenario_sim import ScenarioSequence
from .temporal import BiGRU, FrameMLP, pool_inputs
from .tensor_kernel import DTYPE, Rng

logger = logging.getLogger(__name__)

MODULE_NAMES = ('scene_encoder', 'text_encoder', 'attention_encoder', 'fusion', 'temporal', 'head')


@dataclass
class ModelOutput:
    p: torch.Tensor  # (B, T)
    risk_maps: torch.Tensor  # (B, T, h, w)
    tau: torch.Tensor  # (B, T)
    entropy: torch.Tensor  # (B, T)
    context_vec: torch.Tensor  # (B, T, c)
    fusion: Optional[FusionOutput] = None


def batch_tensors(sequences: Sequence[ScenarioSequence]) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    Stack sequences into model inputs

    Returns:
        (scene (B, T, H, W, 3), tokens (B, L), attention (B, T, H, W))
    """
    if not sequences:
        raise DimensionError("Cannot batch an empty list of sequences")
    shapes = {seq.grid_levels.shape for seq in sequences}
    if len(shapes) != 1:
        raise DimensionError(f"Sequences in a batch differ in shape: {sorted(shapes)}")
    scene = torch.from_numpy(np.stack([seq.scene_grid for seq in sequences]))
    tokens = torch.from_numpy(np.stack([np.asarray(seq.text_tokens, dtype=np.int64) for seq in sequences]))
    attention = torch.from_numpy(np.stack([seq.attention_map for seq in sequences]).astype(np.float64))
    return scene, tokens, attention


class CameraModel(nn.Module):
    """
    Multi-modal accident-risk model

    Args:
        config: Network sizes and variant ('full', 'no_mfe', 'no_ahf', 'no_bigru')
        seed: Initialization seed; every submodule draws from its own child stream
        lambda_init: Initial threshold coefficients
    """

    def __init__(self, config: Optional[ModelConfig] = None, seed: int = 42,
                 lambda_init: Sequence[float] = (0.1, 0.1)):
        super().__init__()
        self.config = (config or ModelConfig()).validate()
        self.seed = int(seed)
        streams = dict(zip(MODULE_NAMES, Rng(seed).spawn(len(MODULE_NAMES))))
        variant = self.config.variant
        self.scene_encoder = SceneEncoder(self.config, streams['scene_encoder'])
        self.text_encoder = TextEncoder(self.config, streams['text_encoder'])
        if variant == 'no_mfe':
            self.attention_encoder = PooledAttentionEncoder(self.config, streams['attention_encoder'])
        else:
            self.attention_encoder = AttentionRefiner(self.config, streams['attention_encoder'])
        if variant == 'no_ahf':
            self.fusion = MeanFusion()
        else:
            self.fusion = AdaptiveFusion(self.config, streams['fusion'])
        if variant == 'no_bigru':
            self.temporal = FrameMLP(self.config, streams['temporal'])
        else:
            self.temporal = BiGRU(self.config, streams['temporal'])
        self.head = RiskHead(self.config, streams['head'], lambda_init)

    @property
    def variant(self) -> str:
        return self.config.variant

    def parameter_groups(self) -> Dict[str, List[Tuple[str, nn.Parameter]]]:
        """Named parameters per top-level module"""
        groups = {}
        for name in MODULE_NAMES:
            module = getattr(self, name)
            groups[name] = [(f'{name}.{pname}', param) for pname, param in module.named_parameters()]
        return groups

    def parameter_count(self) -> int:
        return sum(param.numel() for param in self.parameters())

    def forward(self, scene: torch.Tensor, tokens: torch.Tensor, attention: torch.Tensor,
                causal: bool = False, keep_fusion: bool = False) -> ModelOutput:
        """
        Args:
            scene: (B, T, H, W, 3) occupancy grids in [0, 1]
            tokens: (B, L) token ids
            attention: (B, T, H, W) attention maps
            causal: Forward-only temporal mode
            keep_fusion: Attach fusion intermediates to the output

        Returns:
            ModelOutput
        """
        if scene.dim() != 5 or attention.dim() != 4 or tokens.dim() != 2:
            raise DimensionError("Expected scene (B, T, H, W, 3), tokens (B, L) and attention (B, T, H, W)")
        if scene.shape[:2] != attention.shape[:2] or scene.shape[0] != tokens.shape[0]:
            raise DimensionError("Batch and frame extents of the inputs differ")
        scene = scene.to(DTYPE)
        attention = attention.to(DTYPE)
        T = scene.shape[1]
        scene_features = self.scene_encoder(scene)
        text_features = self.text_encoder(tokens).unsqueeze(1).expand(-1, T, -1, -1, -1)
        attention_features = self.attention_encoder(attention)
        fused = self.fusion([scene_features, text_features, attention_features], keep_gates=keep_fusion)
        states = self.temporal(pool_inputs(fused.visual, fused.context_map), causal=causal)
        p = self.head.predict_probability(states, fused.context_vec)
        risk_maps = self.head.risk_map(states, fused.visual)
        entropy = attention_entropy(attention)
        tau = self.head.threshold(entropy, fused.context_vec)
        return ModelOutput(p, risk_maps, tau, entropy, fused.context_vec, fused if keep_fusion else None)

    @torch.no_grad()
    def trace(self, sequences: Sequence[ScenarioSequence], causal: bool = False,
              batch_size: int = 8) -> List[RiskTrace]:
        """Evaluate sequences into RiskTrace objects (model in no-grad mode)"""
        traces = []
        for start in range(0, len(sequences), batch_size):
            chunk = sequences[start:start + batch_size]
            output = self(*batch_tensors(chunk), causal=causal)
            for index, seq in enumerate(chunk):
                traces.append(RiskTrace(
                    p=output.p[index].numpy().copy(),
                    risk_maps=output.risk_maps[index].numpy().copy(),
                    tau=output.tau[index].numpy().copy(),
                    entropy=output.entropy[index].numpy().copy(),
                    label=seq.label,
                    t_accident=seq.t_accident,
                    fps=seq.fps,
                ))
        return traces
