#!/usr/bin/env python3
"""
Test the bidirectional gated recurrence and the end-to-end model wiring
"""
import math
import unittest
import sys
import os

# Add the repository root to the Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

import torch

from src.commands.gradcheck import MINIATURE
from src.config import ModelConfig
from src.exceptions import DimensionError, InputError
from src.model import CameraModel
from src.temporal import BiGRU, FrameMLP, GRUDirection, gate_values, gru_cell, pool_inputs, run_bidirectional
from src.tensor_kernel import DTYPE, Rng


def scalar_direction():
    """d = 1, one input: z = r = 0.5 and h~ = tanh(x)"""
    params = GRUDirection(1, 1, None)
    with torch.no_grad():
        params.W_h.copy_(torch.tensor([[0.0, 1.0]], dtype=DTYPE))
    return params


class TestPoolInputs(unittest.TestCase):
    """Per-frame pooled recurrence inputs"""

    def test_constant_maps(self):
        visual = torch.full((4, 4, 3), 2.0, dtype=DTYPE)
        context = torch.full((4, 4, 3), -1.0, dtype=DTYPE)
        self.assertEqual(pool_inputs(visual, context).tolist(), [2.0, 2.0, 2.0, -1.0, -1.0, -1.0])

    def test_permutation_invariant(self):
        visual = torch.from_numpy(Rng(1).normal(size=(4, 4, 3)))
        context = torch.from_numpy(Rng(2).normal(size=(4, 4, 3)))
        flip = [3, 1, 0, 2]
        self.assertTrue(torch.allclose(pool_inputs(visual, context), pool_inputs(visual[flip], context[flip])))

    def test_shape_mismatch(self):
        with self.assertRaises(DimensionError):
            pool_inputs(torch.zeros(4, 4, 3), torch.zeros(4, 4, 2))


class TestGruCell(unittest.TestCase):
    """Single gated update"""

    def setUp(self):
        self.params = GRUDirection(3, 4, None)
        self.h = torch.from_numpy(Rng(3).normal(size=3))
        self.x = torch.from_numpy(Rng(4).normal(size=4))

    def test_zero_weights_halve_state(self):
        self.assertTrue(torch.allclose(gru_cell(self.h, self.x, self.params), 0.5 * self.h))

    def test_update_gate_open(self):
        with torch.no_grad():
            self.params.b_z.fill_(1e3)
            self.params.b_h.copy_(torch.tensor([0.1, -0.2, 0.3], dtype=DTYPE))
        self.assertTrue(torch.allclose(gru_cell(self.h, self.x, self.params), torch.tanh(self.params.b_h)))

    def test_update_gate_closed(self):
        with torch.no_grad():
            self.params.b_z.fill_(-1e3)
        self.assertTrue(torch.allclose(gru_cell(self.h, self.x, self.params), self.h))


class TestRunBidirectional(unittest.TestCase):
    """Forward and backward passes"""

    def test_hand_recurrence(self):
        params = scalar_direction()
        inputs = torch.tensor([[1.0], [0.0], [-1.0]], dtype=DTYPE)
        states = run_bidirectional(inputs, params, params)
        t1 = math.tanh(1.0)
        expected = [[0.5 * t1, 0.375 * t1], [0.25 * t1, -0.25 * t1], [-0.375 * t1, -0.5 * t1]]
        self.assertTrue(torch.allclose(states, torch.tensor(expected, dtype=DTYPE)))

    def test_single_frame_symmetry(self):
        config = ModelConfig(channels=4, hidden_size=3)
        forward = GRUDirection(3, 8, Rng(5))
        inputs = torch.from_numpy(Rng(6).normal(size=(1, 8)))
        states = run_bidirectional(inputs, forward, forward)
        self.assertEqual(tuple(states.shape), (1, 6))
        self.assertTrue(torch.equal(states[0, :3], states[0, 3:]))
        self.assertEqual(BiGRU(config, Rng(7))(inputs).shape, states.shape)

    def test_bounds_on_random_sequences(self):
        rng = Rng(13)
        for trial in range(100):
            forward, backward = GRUDirection(3, 4, rng), GRUDirection(3, 4, rng)
            inputs = torch.from_numpy(rng.normal(scale=3.0, size=(int(rng.integers(1, 9)), 4)))
            states = run_bidirectional(inputs, forward, backward)
            self.assertLessEqual(float(states.abs().max()), 1.0, trial)
            h = torch.zeros(3, dtype=DTYPE)
            for x in inputs:
                gates = gate_values(h, x, forward)
                for name in ('z', 'r'):
                    self.assertTrue(torch.all((gates[name] > 0.0) & (gates[name] < 1.0)), (trial, name))
                h = gru_cell(h, x, forward)

    def test_time_reversal(self):
        params = GRUDirection(3, 8, Rng(14))
        inputs = torch.from_numpy(Rng(15).normal(size=(2, 7, 8)))
        states = run_bidirectional(inputs, params, params)
        reversed_states = run_bidirectional(inputs.flip(-2), params, params)
        self.assertTrue(torch.allclose(states[..., 3:], reversed_states[..., :3].flip(-2), rtol=0.0, atol=1e-12))
        self.assertTrue(torch.allclose(states[..., :3], reversed_states[..., 3:].flip(-2), rtol=0.0, atol=1e-12))

    def test_causal_backward_reset_per_frame(self):
        forward, backward = GRUDirection(3, 8, Rng(16)), GRUDirection(3, 8, Rng(17))
        inputs = torch.from_numpy(Rng(18).normal(size=(5, 8)))
        states = run_bidirectional(inputs, forward, backward, causal=True)
        full = run_bidirectional(inputs, forward, backward)
        zero = torch.zeros(3, dtype=DTYPE)
        for t in range(5):
            self.assertTrue(torch.equal(states[t, 3:], gru_cell(zero, inputs[t], backward)), t)
        self.assertTrue(torch.equal(states[:, :3], full[:, :3]))

    def test_causal_mode_ignores_future(self):
        gru = BiGRU(ModelConfig(channels=4, hidden_size=3), Rng(8))
        inputs = torch.from_numpy(Rng(9).normal(size=(2, 6, 8)))
        changed = inputs.clone()
        changed[:, 4:] += 5.0
        causal = gru(inputs, causal=True)
        self.assertTrue(torch.allclose(causal[:, :4], gru(changed, causal=True)[:, :4], rtol=0.0, atol=1e-12))
        full = gru(inputs)
        self.assertFalse(torch.allclose(full[:, :4, 3:], gru(changed)[:, :4, 3:]))

    def test_errors(self):
        params = scalar_direction()
        with self.assertRaises(InputError):
            run_bidirectional(torch.zeros(0, 1, dtype=DTYPE), params, params)
        with self.assertRaises(DimensionError):
            run_bidirectional(torch.zeros(3, 2, dtype=DTYPE), params, params)

    def test_frame_mlp(self):
        mlp = FrameMLP(ModelConfig(channels=4, hidden_size=3), Rng(10))
        out = mlp(torch.from_numpy(Rng(11).normal(size=(5, 8))))
        self.assertEqual(tuple(out.shape), (5, 6))


class TestCameraModel(unittest.TestCase):
    """Wiring of the full model and its knockout variants"""

    def setUp(self):
        rng = Rng(12)
        self.scene = torch.from_numpy(rng.uniform(0.0, 1.0, size=(2, 5, 4, 4, 3)))
        self.attention = torch.from_numpy(rng.uniform(0.1, 1.0, size=(2, 5, 4, 4)))
        self.tokens = torch.from_numpy(rng.integers(1, 64, size=(2, 6)))

    def test_outputs(self):
        for variant in ModelConfig.VARIANTS:
            model = CameraModel(ModelConfig(variant=variant, **MINIATURE), seed=1)
            out = model(self.scene, self.tokens, self.attention)
            self.assertEqual(tuple(out.p.shape), (2, 5), variant)
            self.assertEqual(tuple(out.risk_maps.shape), (2, 5, 2, 2), variant)
            self.assertTrue(torch.all((out.p > 0) & (out.p < 1)), variant)
            self.assertTrue(torch.allclose(out.risk_maps.sum(dim=(-2, -1)), torch.ones(2, 5, dtype=DTYPE)))
            self.assertTrue(torch.all((out.tau >= 0.3) & (out.tau <= 0.7)), variant)

    def test_same_seed_same_parameters(self):
        first = CameraModel(ModelConfig(**MINIATURE), seed=3).state_dict()
        second = CameraModel(ModelConfig(**MINIATURE), seed=3).state_dict()
        self.assertEqual(first.keys(), second.keys())
        for key in first:
            self.assertTrue(torch.equal(first[key], second[key]), key)

    def test_causal_prefix(self):
        model = CameraModel(ModelConfig(**MINIATURE), seed=4)
        changed = self.scene.clone()
        changed[:, 3:] = 1.0 - changed[:, 3:]
        before = model(self.scene, self.tokens, self.attention, causal=True).p
        after = model(changed, self.tokens, self.attention, causal=True).p
        self.assertTrue(torch.allclose(before[:, :3], after[:, :3], rtol=0.0, atol=1e-12))

    def test_input_checks(self):
        model = CameraModel(ModelConfig(**MINIATURE), seed=5)
        with self.assertRaises(DimensionError):
            model(self.scene[0], self.tokens, self.attention)
        with self.assertRaises(DimensionError):
            model(self.scene, self.tokens, self.attention[:, :4])


if __name__ == '__main__':
    unittest.main()
