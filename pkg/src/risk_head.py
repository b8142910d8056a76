#!/usr/bin/env python3
"""
Risk Head

Per-frame accident probability, spatial risk map, driver attention
entropy and the adaptive alert threshold.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
import torch
import torch.nn as nn

from .config import ModelConfig
from .exceptions import InputError
from .tensor_kernel import Rng, conv2d, init_parameter, linear, relu, sigmoid, softmax

ENTROPY_EPS = 1e-8
THRESHOLD_BASE = 0.5
THRESHOLD_RANGE = (0.3, 0.7)
LAMBDA_RANGE = (0.0, 0.2)


@dataclass
class RiskTrace:
    """Per-frame outputs for one sequence"""
    p: np.ndarray  # (T,)
    risk_maps: np.ndarray  # (T, h, w), each a distribution
    tau: np.ndarray  # (T,)
    entropy: Optional[np.ndarray] = None
    label: bool = False
    t_accident: Optional[int] = None
    fps: int = 10

    @property
    def alert(self) -> np.ndarray:
        return self.p > self.tau

    @property
    def frames(self) -> int:
        return int(len(self.p))

    def peak_cells(self) -> np.ndarray:
        """(row, col) of each frame's risk-map argmax"""
        T, h, w = self.risk_maps.shape
        flat = self.risk_maps.reshape(T, -1).argmax(axis=1)
        return np.stack([flat // w, flat % w], axis=1)


def attention_entropy(attention: Union[np.ndarray, torch.Tensor]) -> Union[np.ndarray, torch.Tensor, float]:
    """
    Normalized Shannon entropy of (..., H, W) attention maps

    q = (X + eps) / sum(X + eps), E = -sum(q ln q) / ln(H * W)

    Returns:
        Entropy in [0, 1], one value per map
    """
    if isinstance(attention, torch.Tensor):
        if bool((attention < 0).any()) or bool((attention.sum(dim=(-2, -1)) <= 0).any()):
            raise InputError("Attention map must be nonnegative and not all zero")
        q = attention + ENTROPY_EPS
        q = q / q.sum(dim=(-2, -1), keepdim=True)
        cells = attention.shape[-2] * attention.shape[-1]
        return -(q * torch.log(q)).sum(dim=(-2, -1)) / math.log(cells)
    attention = np.asarray(attention, dtype=np.float64)
    if attention.ndim < 2:
        raise InputError("Attention map must be (..., H, W)")
    if np.any(attention < 0) or np.any(attention.sum(axis=(-2, -1)) <= 0):
        raise InputError("Attention map must be nonnegative and not all zero")
    q = attention + ENTROPY_EPS
    q = q / q.sum(axis=(-2, -1), keepdims=True)
    cells = attention.shape[-2] * attention.shape[-1]
    entropy = -(q * np.log(q)).sum(axis=(-2, -1)) / math.log(cells)
    return float(entropy) if entropy.ndim == 0 else entropy


def scene_complexity(context_vec: torch.Tensor) -> torch.Tensor:
    """tanh(||F_context||_2 / sqrt(c)) in [0, 1)"""
    return torch.tanh(context_vec.norm(dim=-1) / math.sqrt(context_vec.shape[-1]))


def adaptive_threshold(entropy, context_vec: torch.Tensor, lambdas: Union[torch.Tensor, Sequence[float]],
                       clamp: bool = True) -> torch.Tensor:
    """
    tau = clamp(0.5 + lambda1 * E - lambda2 * tanh(||F_context|| / sqrt(c)), 0.3, 0.7)

    Args:
        entropy: Attention entropy E, scalar or (...)
        context_vec: Pooled context vector (..., c)
        lambdas: (lambda1, lambda2)
        clamp: Apply the [0.3, 0.7] clamp (disable only to inspect the raw value)
    """
    lambdas = torch.as_tensor(lambdas, dtype=context_vec.dtype)
    entropy = torch.as_tensor(entropy, dtype=context_vec.dtype)
    raw = THRESHOLD_BASE + lambdas[0] * entropy - lambdas[1] * scene_complexity(context_vec)
    return raw.clamp(*THRESHOLD_RANGE) if clamp else raw


class RiskHead(nn.Module):
    """
    Probability head (GRU state plus psi(context)), risk-map correlation and
    the learnable threshold coefficients lambda1, lambda2.
    """

    def __init__(self, config: ModelConfig, rng: Rng, lambda_init: Sequence[float] = (0.1, 0.1)):
        super().__init__()
        c, d = config.channels, config.hidden_size
        self.psi_w1 = init_parameter(rng, (c, c // 2))
        self.psi_b1 = init_parameter(None, (c // 2,))
        self.psi_w2 = init_parameter(rng, (c // 2, c // 4))
        self.psi_b2 = init_parameter(None, (c // 4,))
        self.w_p = init_parameter(rng, (2 * d + c // 4,))
        self.b_p = init_parameter(None, ())
        self.P = init_parameter(rng, (d, 2 * d), fan_in=2 * d)
        self.visual_kernel = init_parameter(rng, (1, 1, c, d), fan_in=c)
        self.visual_bias = init_parameter(None, (d,))
        self.lambdas = nn.Parameter(torch.as_tensor(list(lambda_init), dtype=torch.float64))

    def psi(self, context_vec: torch.Tensor) -> torch.Tensor:
        return linear(relu(linear(context_vec, self.psi_w1, self.psi_b1)), self.psi_w2, self.psi_b2)

    def predict_probability(self, states: torch.Tensor, context_vec: torch.Tensor) -> torch.Tensor:
        """p = sigmoid(w_p . [H_gru ; psi(F_context)] + b_p)"""
        joint = torch.cat([states, self.psi(context_vec)], dim=-1)
        return sigmoid((joint * self.w_p).sum(dim=-1) + self.b_p)

    def risk_scores(self, states: torch.Tensor, visual: torch.Tensor) -> torch.Tensor:
        """Zero-lag correlation of the projected GRU state with the projected visual map"""
        projected_state = linear(states, self.P.t())
        projected_visual = conv2d(visual, self.visual_kernel, self.visual_bias)
        return (projected_visual * projected_state[..., None, None, :]).sum(dim=-1)

    def risk_map(self, states: torch.Tensor, visual: torch.Tensor) -> torch.Tensor:
        """Softmax of the correlation scores over all positions, (..., h, w)"""
        return softmax_map(self.risk_scores(states, visual))

    def threshold(self, entropy, context_vec: torch.Tensor) -> torch.Tensor:
        return adaptive_threshold(entropy, context_vec, self.lambdas)

    @torch.no_grad()
    def project_lambdas(self):
        """Clamp lambda1, lambda2 into [0, 0.2]"""
        self.lambdas.clamp_(*LAMBDA_RANGE)


def softmax_map(scores: Union[np.ndarray, torch.Tensor]) -> torch.Tensor:
    """Softmax over every position of an (..., h, w) score map"""
    scores = torch.as_tensor(scores, dtype=torch.float64)
    h, w = scores.shape[-2:]
    return softmax(scores.reshape(*scores.shape[:-2], h * w), axis=-1).reshape(scores.shape)
