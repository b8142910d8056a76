#!/usr/bin/env python3
"""
Bidirectional gated recurrence over pooled per-frame features
"""

from typing import Dict, Optional

import torch
import torch.nn as nn

from .config import ModelConfig
from .exceptions import DimensionError, InputError
from .tensor_kernel import Rng, init_parameter, linear, pool, sigmoid, tanh


def pool_inputs(visual: torch.Tensor, context_map: torch.Tensor) -> torch.Tensor:
    """Concatenate visual and context maps along channels and global-average pool to 2c"""
    if visual.shape != context_map.shape:
        raise DimensionError(f"pool_inputs shapes differ: {tuple(visual.shape)} vs {tuple(context_map.shape)}")
    return pool(torch.cat([visual, context_map], dim=-1), 'global-avg')


class GRUDirection(nn.Module):
    """One direction's gates: W_* are d x (d + input_size)"""

    def __init__(self, hidden_size: int, input_size: int, rng: Optional[Rng]):
        super().__init__()
        fan_in = hidden_size + input_size
        self.hidden_size = hidden_size
        self.input_size = input_size
        self.W_z = init_parameter(rng, (hidden_size, fan_in), fan_in=fan_in)
        self.W_r = init_parameter(rng, (hidden_size, fan_in), fan_in=fan_in)
        self.W_h = init_parameter(rng, (hidden_size, fan_in), fan_in=fan_in)
        self.b_z = init_parameter(None, (hidden_size,))
        self.b_r = init_parameter(None, (hidden_size,))
        self.b_h = init_parameter(None, (hidden_size,))


def gate_values(h_prev: torch.Tensor, x: torch.Tensor, params: GRUDirection) -> Dict[str, torch.Tensor]:
    """Update gate z and reset gate r, each in (0, 1)"""
    hx = torch.cat([h_prev, x], dim=-1)
    return {
        'z': sigmoid(linear(hx, params.W_z.t(), params.b_z)),
        'r': sigmoid(linear(hx, params.W_r.t(), params.b_r)),
    }


def gru_cell(h_prev: torch.Tensor, x: torch.Tensor, params: GRUDirection) -> torch.Tensor:
    """
    One gated update

    z = sigmoid(W_z [h; x] + b_z), r = sigmoid(W_r [h; x] + b_r),
    h~ = tanh(W_h [r * h; x] + b_h), h' = (1 - z) * h + z * h~
    """
    gates = gate_values(h_prev, x, params)
    z, r = gates['z'], gates['r']
    candidate = tanh(linear(torch.cat([r * h_prev, x], dim=-1), params.W_h.t(), params.b_h))
    return (1.0 - z) * h_prev + z * candidate


class BiGRU(nn.Module):
    """
    Bidirectional recurrence producing [h_forward; h_backward] per frame

    In causal mode the backward half at frame t only sees frame t (one
    update from the zero state), so no future frame influences the output.
    """

    def __init__(self, config: ModelConfig, rng: Rng):
        super().__init__()
        input_size = 2 * config.channels
        self.hidden_size = config.hidden_size
        self.forward_cell = GRUDirection(config.hidden_size, input_size, rng)
        self.backward_cell = GRUDirection(config.hidden_size, input_size, rng)

    def forward(self, inputs: torch.Tensor, causal: bool = False) -> torch.Tensor:
        return run_bidirectional(inputs, self.forward_cell, self.backward_cell, causal=causal)


def run_bidirectional(inputs: torch.Tensor, forward_params: GRUDirection, backward_params: GRUDirection,
                      causal: bool = False) -> torch.Tensor:
    """
    Run both directions over (..., T, 2c) inputs from zero initial states

    With causal=True the backward state is reset per frame: the backward
    half at frame t is one update of the zero state on frame t alone.

    Returns:
        Tensor (..., T, 2d)
    """
    if inputs.dim() < 2 or inputs.shape[-2] == 0:
        raise InputError("run_bidirectional needs a nonempty sequence")
    if inputs.shape[-1] != forward_params.input_size:
        raise DimensionError(f"Expected input size {forward_params.input_size}, got {inputs.shape[-1]}")
    T = inputs.shape[-2]
    zero = inputs.new_zeros(*inputs.shape[:-2], forward_params.hidden_size)
    forward_states = []
    h = zero
    for t in range(T):
        h = gru_cell(h, inputs[..., t, :], forward_params)
        forward_states.append(h)
    if causal:
        backward_states = [gru_cell(zero, inputs[..., t, :], backward_params) for t in range(T)]
    else:
        backward_states = [None] * T
        h = zero
        for t in reversed(range(T)):
            h = gru_cell(h, inputs[..., t, :], backward_params)
            backward_states[t] = h
    return torch.cat([torch.stack(forward_states, dim=-2), torch.stack(backward_states, dim=-2)], dim=-1)


class FrameMLP(nn.Module):
    """Recurrence bypass: per-frame tanh layer from 2c to 2d"""

    def __init__(self, config: ModelConfig, rng: Rng):
        super().__init__()
        self.weight = init_parameter(rng, (2 * config.channels, 2 * config.hidden_size))
        self.bias = init_parameter(None, (2 * config.hidden_size,))

    def forward(self, inputs: torch.Tensor, causal: bool = False) -> torch.Tensor:
        if inputs.dim() < 2 or inputs.shape[-2] == 0:
            raise InputError("FrameMLP needs a nonempty sequence")
        return tanh(linear(inputs, self.weight, self.bias))
