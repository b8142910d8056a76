#!/usr/bin/env python3
"""
Test the risk head: probability, risk map, attention entropy and the adaptive threshold
"""
import math
import unittest
import sys
import os

# Add the repository root to the Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

import numpy as np
import torch

from src.config import ModelConfig
from src.exceptions import InputError
from src.risk_head import RiskHead, RiskTrace, adaptive_threshold, attention_entropy, scene_complexity, softmax_map
from src.tensor_kernel import DTYPE, Rng


class TestProbability(unittest.TestCase):
    """Per-frame accident probability"""

    def setUp(self):
        self.head = RiskHead(ModelConfig(), Rng(1))
        self.states = torch.from_numpy(Rng(2).normal(size=(5, 32)))
        self.context = torch.from_numpy(Rng(3).normal(size=(5, 16)))

    def test_zero_weights_give_half(self):
        with torch.no_grad():
            self.head.w_p.zero_()
        p = self.head.predict_probability(self.states, self.context)
        self.assertTrue(torch.all(p == 0.5))

    def test_monotone_in_bias(self):
        values = []
        for bias in (-2.0, 0.0, 2.0, 40.0):
            with torch.no_grad():
                self.head.b_p.fill_(bias)
            values.append(self.head.predict_probability(self.states, self.context))
        for lower, higher in zip(values, values[1:]):
            self.assertTrue(torch.all(higher >= lower))
        self.assertTrue(torch.allclose(values[-1], torch.ones(5, dtype=DTYPE)))


class TestRiskMap(unittest.TestCase):
    """Spatial risk distribution"""

    def test_hand_softmax(self):
        out = softmax_map([[0.0, math.log(2.0)], [0.0, 0.0]])
        self.assertTrue(torch.allclose(out, torch.tensor([[0.2, 0.4], [0.2, 0.2]], dtype=DTYPE)))

    def test_uniform_and_saturated(self):
        self.assertTrue(torch.allclose(softmax_map(torch.zeros(8, 8)), torch.full((8, 8), 1 / 64, dtype=DTYPE)))
        scores = torch.zeros(4, 4, dtype=DTYPE)
        scores[2, 1] = 100.0
        self.assertGreater(softmax_map(scores)[2, 1].item(), 1.0 - 1e-12)

    def test_shift_invariant(self):
        scores = torch.from_numpy(Rng(4).normal(size=(3, 8, 8)))
        self.assertTrue(torch.allclose(softmax_map(scores), softmax_map(scores + 7.5)))

    def test_head_map_is_distribution(self):
        head = RiskHead(ModelConfig(), Rng(5))
        states = torch.from_numpy(Rng(6).normal(size=(2, 4, 32)))
        visual = torch.from_numpy(Rng(7).normal(size=(2, 4, 8, 8, 16)))
        maps = head.risk_map(states, visual)
        self.assertEqual(tuple(maps.shape), (2, 4, 8, 8))
        self.assertTrue(torch.allclose(maps.sum(dim=(-2, -1)), torch.ones(2, 4, dtype=DTYPE)))


class TestAttentionEntropy(unittest.TestCase):
    """Normalized Shannon entropy of driver attention"""

    def test_uniform(self):
        self.assertAlmostEqual(attention_entropy(np.ones((8, 8))), 1.0)

    def test_one_hot(self):
        one_hot = np.zeros((8, 8))
        one_hot[3, 4] = 1.0
        self.assertLess(attention_entropy(one_hot), 1e-5)
        self.assertLessEqual(attention_entropy(np.array([[0.0, 1.0], [0.0, 0.0]])), 1e-6)

    def test_two_of_four(self):
        self.assertAlmostEqual(attention_entropy(np.array([[0.5, 0.5], [0.0, 0.0]])), 0.5, delta=1e-6)

    def test_batched_numpy_matches_torch(self):
        maps = Rng(8).uniform(0.0, 1.0, size=(3, 4, 6, 6))
        numpy_values = attention_entropy(maps)
        torch_values = attention_entropy(torch.from_numpy(maps))
        self.assertEqual(numpy_values.shape, (3, 4))
        self.assertTrue(np.allclose(numpy_values, torch_values.numpy()))

    def test_invalid(self):
        with self.assertRaises(InputError):
            attention_entropy(np.zeros((4, 4)))
        with self.assertRaises(InputError):
            attention_entropy(np.array([[1.0, -0.5], [0.0, 0.0]]))
        with self.assertRaises(InputError):
            attention_entropy(torch.zeros(4, 4, dtype=DTYPE))


class TestAdaptiveThreshold(unittest.TestCase):
    """tau from entropy and scene complexity"""

    def setUp(self):
        self.context = torch.from_numpy(Rng(9).normal(size=16))

    def test_zero_coefficients(self):
        self.assertEqual(adaptive_threshold(0.83, self.context, (0.0, 0.0)).item(), 0.5)

    def test_bounds(self):
        self.assertAlmostEqual(adaptive_threshold(1.0, torch.zeros(16, dtype=DTYPE), (0.2, 0.2)).item(), 0.7)
        saturated = torch.full((16,), 1e6, dtype=DTYPE)
        self.assertAlmostEqual(adaptive_threshold(0.0, saturated, (0.0, 0.2)).item(), 0.3)

    def test_range_without_clamp(self):
        rng = Rng(10)
        lambdas = rng.uniform(0.0, 0.2, size=(10000, 2))
        entropy = torch.from_numpy(rng.uniform(0.0, 1.0, size=10000))
        context = torch.from_numpy(rng.normal(scale=5.0, size=(10000, 16)))
        raw = (0.5 + torch.from_numpy(lambdas[:, 0]) * entropy
               - torch.from_numpy(lambdas[:, 1]) * scene_complexity(context))
        self.assertTrue(torch.all((raw >= 0.3) & (raw <= 0.7)))
        for index in range(0, 10000, 997):
            tau = adaptive_threshold(entropy[index], context[index], lambdas[index], clamp=False)
            self.assertAlmostEqual(tau.item(), raw[index].item())

    def test_monotone(self):
        entropies = torch.linspace(0.0, 1.0, 11, dtype=DTYPE)
        taus = adaptive_threshold(entropies, self.context.expand(11, 16), (0.15, 0.1))
        self.assertTrue(torch.all(taus[1:] > taus[:-1]))
        scales = torch.linspace(0.0, 3.0, 11, dtype=DTYPE)[:, None]
        taus = adaptive_threshold(0.5, scales * self.context, (0.15, 0.1))
        self.assertTrue(torch.all(taus[1:] < taus[:-1]))

    def test_project_lambdas(self):
        head = RiskHead(ModelConfig(), Rng(11), lambda_init=(0.5, -0.1))
        head.project_lambdas()
        self.assertEqual(head.lambdas.tolist(), [0.2, 0.0])


class TestRiskTrace(unittest.TestCase):
    """Per-sequence outputs"""

    def test_alert_and_peaks(self):
        maps = np.zeros((2, 2, 3))
        maps[0, 1, 2] = 1.0
        maps[1, 0, 0] = 1.0
        trace = RiskTrace(p=np.array([0.6, 0.4]), risk_maps=maps, tau=np.array([0.5, 0.5]))
        self.assertEqual(trace.alert.tolist(), [True, False])
        self.assertEqual(trace.peak_cells().tolist(), [[1, 2], [0, 0]])
        self.assertEqual(trace.frames, 2)


if __name__ == '__main__':
    unittest.main()
