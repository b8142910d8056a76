#!/usr/bin/env python3
"""
Test the adaptive hierarchical fusion
"""
import unittest
import sys
import os

# Add the repository root to the Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

import torch

from src.config import ModelConfig
from src.exceptions import DimensionError
from src.fusion import PAIRS, AdaptiveFusion, MeanFusion, cosine_gate
from src.tensor_kernel import DTYPE, Rng


def random_maps(seed, shape=(8, 8, 16)):
    return [torch.from_numpy(rng.normal(size=shape)) for rng in Rng(seed).spawn(3)]


def make_transparent(fusion: AdaptiveFusion):
    """Identity projections and all scale weight on the unscaled level"""
    c = fusion.channels
    with torch.no_grad():
        for kernel, bias in zip(fusion.proj_kernels, fusion.proj_biases):
            kernel.copy_(torch.eye(c, dtype=DTYPE).reshape(1, 1, c, c))
            bias.zero_()
        for pyramid in fusion.pyramids:
            logits = torch.full_like(pyramid.logits, -1e3)
            logits[0] = 0.0
            pyramid.logits.copy_(logits)


class TestCosineGate(unittest.TestCase):
    """Per-position co-activation"""

    def test_identical_vectors(self):
        a = torch.from_numpy(Rng(1).normal(size=(4, 4, 6)))
        self.assertTrue(torch.allclose(cosine_gate(a, a), torch.ones(4, 4, dtype=DTYPE)))

    def test_orthogonal_and_opposite(self):
        a = torch.tensor([[1.0, 0.0]], dtype=DTYPE)
        b = torch.tensor([[0.0, 2.0]], dtype=DTYPE)
        self.assertAlmostEqual(cosine_gate(a, b).item(), 0.5)
        self.assertAlmostEqual(cosine_gate(a, -a).item(), 0.0)

    def test_zero_vector_is_finite(self):
        zero = torch.zeros(1, 3, dtype=DTYPE)
        self.assertAlmostEqual(cosine_gate(zero, zero).item(), 0.5)


class TestAdaptiveFusion(unittest.TestCase):
    """Alignment, co-activation fusion and basis decomposition"""

    def setUp(self):
        self.config = ModelConfig()
        self.fusion = AdaptiveFusion(self.config, Rng(7))

    def test_shapes_and_gates(self):
        out = self.fusion(random_maps(1, (2, 8, 8, 16)), keep_gates=True)
        self.assertEqual(tuple(out.visual.shape), (2, 8, 8, 16))
        self.assertEqual(tuple(out.context_map.shape), (2, 8, 8, 16))
        self.assertEqual(tuple(out.context_vec.shape), (2, 16))
        self.assertEqual(len(PAIRS), 6)
        for i, j in PAIRS:
            beta = out.gates[f'beta_{i}_{j}']
            self.assertTrue(torch.all((beta > 0) & (beta < 1)))
            gamma = out.gates[f'gamma_{i}_{j}']
            self.assertTrue(torch.all((gamma >= 0) & (gamma <= 1)))
        for key in ('alpha_visual', 'alpha_context'):
            self.assertTrue(torch.allclose(out.gates[key].sum(dim=-1), torch.ones(2, dtype=DTYPE)))

    def test_identity_alignment(self):
        make_transparent(self.fusion)
        features = random_maps(2)
        aligned = self.fusion.align_and_recalibrate(features)
        for feature, projected, recalibrated in zip(features, aligned.projected, aligned.recalibrated):
            self.assertTrue(torch.allclose(projected, feature))
            self.assertTrue(torch.allclose(recalibrated, feature))

    def test_saturated_gates_on_equal_inputs(self):
        make_transparent(self.fusion)
        with torch.no_grad():
            for key in self.fusion.pair_b2:
                self.fusion.pair_b2[key].fill_(1e3)
        feature = torch.from_numpy(Rng(3).normal(size=(8, 8, 16)))
        fused = self.fusion.coat_fuse(self.fusion.align_and_recalibrate([feature, feature, feature]))
        self.assertTrue(torch.allclose(fused, 2.0 * feature))

    def test_single_identity_basis(self):
        config = ModelConfig(bases=1)
        fusion = AdaptiveFusion(config, Rng(8))
        with torch.no_grad():
            fusion.visual_bases.copy_(torch.eye(16, dtype=DTYPE).reshape(1, 16, 16))
            fusion.visual_basis_bias.zero_()
        fused = torch.from_numpy(Rng(9).normal(size=(8, 8, 16)))
        visual, context_map, context_vec = fusion.biba_decompose(fused)
        self.assertTrue(torch.allclose(visual, fused))
        self.assertTrue(torch.allclose(context_vec, context_map.mean(dim=(0, 1))))

    def test_modality_relabeling(self):
        features = random_maps(4)
        relabeled = AdaptiveFusion(self.config, Rng(7))
        order = (2, 1, 0)
        with torch.no_grad():
            for new, old in enumerate(order):
                relabeled.proj_kernels[new].copy_(self.fusion.proj_kernels[old])
                relabeled.proj_biases[new].copy_(self.fusion.proj_biases[old])
                relabeled.pyramids[new].load_state_dict(self.fusion.pyramids[old].state_dict())
            for i, j in PAIRS:
                source = f'pair_{order[i]}_{order[j]}'
                target = f'pair_{i}_{j}'
                for table in ('pair_w1', 'pair_b1', 'pair_w2', 'pair_b2'):
                    getattr(relabeled, table)[target].copy_(getattr(self.fusion, table)[source])
        original = self.fusion.coat_fuse(self.fusion.align_and_recalibrate(features))
        swapped = relabeled.coat_fuse(relabeled.align_and_recalibrate([features[k] for k in order]))
        self.assertTrue(torch.allclose(original, swapped))

    def test_modality_checks(self):
        with self.assertRaises(DimensionError):
            self.fusion(random_maps(5)[:2])
        maps = random_maps(5)
        maps[1] = maps[1][:4]
        with self.assertRaises(DimensionError):
            self.fusion(maps)


class TestMeanFusion(unittest.TestCase):
    """Bypass used by the no_ahf variant"""

    def test_mean(self):
        features = random_maps(6)
        out = MeanFusion()(features)
        expected = (features[0] + features[1] + features[2]) / 3.0
        self.assertTrue(torch.allclose(out.visual, expected))
        self.assertTrue(torch.allclose(out.context_vec, expected.mean(dim=(0, 1))))


if __name__ == '__main__':
    unittest.main()
