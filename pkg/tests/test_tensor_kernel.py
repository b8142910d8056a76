#!/usr/bin/env python3
"""
Test the tensor kernel: shapes, hand-evaluated values and gradient checks
"""
import unittest
import sys
import os

# Add the repository root to the Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

import numpy as np
import torch

from src.exceptions import DimensionError, GradientCheckError
from src.tensor_kernel import (Rng, as_tensor, conv2d, downsample_mean, grad_check, init_parameter, linear, matmul,
                               pool, relative_error, relu, sigmoid, softmax, tanh, upsample_nearest)


class TestMatmul(unittest.TestCase):
    """Matrix products"""

    def test_identity(self):
        a = as_tensor([[1.5, -2.0], [0.25, 4.0]])
        self.assertTrue(torch.equal(matmul(torch.eye(2, dtype=torch.float64), a), a))

    def test_hand_evaluation(self):
        result = matmul(as_tensor([[1, 2], [3, 4]]), as_tensor([[1], [1]]))
        self.assertEqual(result.tolist(), [[3.0], [7.0]])

    def test_zero_matrix(self):
        a = as_tensor(np.arange(6).reshape(2, 3))
        self.assertTrue(torch.equal(matmul(torch.zeros(4, 2, dtype=torch.float64), a), torch.zeros(4, 3)))

    def test_shape_mismatch(self):
        with self.assertRaises(DimensionError):
            matmul(torch.ones(2, 3), torch.ones(2, 3))

    def test_leading_axes_and_linear(self):
        x = torch.ones(5, 2, 3, dtype=torch.float64)
        w = torch.full((3, 4), 2.0, dtype=torch.float64)
        self.assertEqual(tuple(matmul(x, w).shape), (5, 2, 4))
        out = linear(torch.ones(7, 3, dtype=torch.float64), w, torch.ones(4, dtype=torch.float64))
        self.assertTrue(torch.equal(out, torch.full((7, 4), 7.0, dtype=torch.float64)))

    def test_as_tensor_checks_count(self):
        self.assertEqual(tuple(as_tensor(range(6), (2, 3)).shape), (2, 3))
        with self.assertRaises(DimensionError):
            as_tensor(range(5), (2, 3))


class TestConv2d(unittest.TestCase):
    """Channels-last cross-correlation"""

    def test_one_by_one_identity(self):
        x = torch.from_numpy(Rng(1).normal(size=(4, 4, 3)))
        kernel = torch.eye(3, dtype=torch.float64).reshape(1, 1, 3, 3)
        self.assertTrue(torch.equal(conv2d(x, kernel), x))

    def test_all_ones_valid(self):
        out = conv2d(torch.ones(4, 4, 1, dtype=torch.float64), torch.ones(3, 3, 1, 1, dtype=torch.float64),
                     padding='valid')
        self.assertEqual(tuple(out.shape), (2, 2, 1))
        self.assertTrue(torch.all(out == 9.0))

    def test_stride_two_same_shape(self):
        out = conv2d(torch.ones(8, 8, 2, dtype=torch.float64), torch.ones(3, 3, 2, 5, dtype=torch.float64), stride=2)
        self.assertEqual(tuple(out.shape), (4, 4, 5))

    def test_no_kernel_flip(self):
        x = torch.zeros(3, 3, 1, dtype=torch.float64)
        x[1, 2, 0] = 1.0
        kernel = torch.zeros(3, 3, 1, 1, dtype=torch.float64)
        kernel[1, 2, 0, 0] = 1.0
        # cross-correlation picks the right neighbour into the centre
        self.assertEqual(conv2d(x, kernel, padding='valid').item(), 1.0)

    def test_replicate_padding_keeps_constant_maps(self):
        x = torch.full((4, 4, 1), 2.0, dtype=torch.float64)
        out = conv2d(x, torch.ones(3, 3, 1, 1, dtype=torch.float64), pad_mode='replicate')
        self.assertTrue(torch.all(out == 18.0))

    def test_leading_batch_axes(self):
        out = conv2d(torch.ones(2, 3, 8, 8, 1, dtype=torch.float64), torch.ones(3, 3, 1, 4, dtype=torch.float64),
                     stride=2)
        self.assertEqual(tuple(out.shape), (2, 3, 4, 4, 4))

    def test_errors(self):
        with self.assertRaises(DimensionError):
            conv2d(torch.ones(2, 2, 1), torch.ones(5, 5, 1, 1), padding='valid')
        with self.assertRaises(DimensionError):
            conv2d(torch.ones(4, 4, 1), torch.ones(2, 2, 1, 1))
        with self.assertRaises(DimensionError):
            conv2d(torch.ones(4, 4, 2), torch.ones(3, 3, 1, 1))


class TestActivationsAndPools(unittest.TestCase):
    """Elementwise activations, softmax, pooling and resampling"""

    def test_activations(self):
        self.assertEqual(sigmoid(torch.zeros(1)).item(), 0.5)
        saturated = tanh(as_tensor([1e6, -1e6]))
        self.assertTrue(torch.all(torch.isfinite(saturated)))
        self.assertAlmostEqual(saturated[0].item(), 1.0, delta=1e-12)
        self.assertAlmostEqual(saturated[1].item(), -1.0, delta=1e-12)
        self.assertEqual(relu(as_tensor([-1.0, 2.0])).tolist(), [0.0, 2.0])

    def test_softmax(self):
        self.assertTrue(torch.allclose(softmax(torch.zeros(5)), torch.full((5,), 0.2, dtype=torch.float64)))
        x = torch.from_numpy(Rng(3).normal(scale=30.0, size=(4, 7)))
        out = softmax(x, axis=1)
        self.assertTrue(torch.all(torch.abs(out.sum(dim=1) - 1.0) <= 1e-12))
        self.assertTrue(torch.all(out >= 0) and torch.all(out <= 1))

    def test_pools(self):
        constant = torch.full((3, 4, 2), 1.5, dtype=torch.float64)
        for kind in ('global-avg', 'global-max', 'channel-avg', 'channel-max'):
            self.assertTrue(torch.all(pool(constant, kind) == 1.5), kind)
        one_hot = torch.zeros(3, 3, 1, dtype=torch.float64)
        one_hot[1, 2, 0] = 1.0
        self.assertEqual(pool(one_hot, 'global-max').item(), 1.0)
        pair = as_tensor([1.0, 3.0], (1, 2, 1))
        self.assertEqual(pool(pair, 'global-avg').item(), 2.0)
        self.assertEqual(tuple(pool(constant, 'channel-max').shape), (3, 4))
        with self.assertRaises(DimensionError):
            pool(constant, 'median')

    def test_upsample_nearest(self):
        x = torch.from_numpy(Rng(4).normal(size=(2, 2, 3)))
        self.assertTrue(torch.equal(upsample_nearest(x, (2, 2)), x))
        single = torch.full((1, 1, 1), 7.0, dtype=torch.float64)
        self.assertTrue(torch.all(upsample_nearest(single, (2, 2)) == 7.0))
        checker = as_tensor([[1, 0], [0, 1]]).reshape(2, 2, 1)
        expected = as_tensor([[1, 1, 0, 0], [1, 1, 0, 0], [0, 0, 1, 1], [0, 0, 1, 1]]).reshape(4, 4, 1)
        self.assertTrue(torch.equal(upsample_nearest(checker, (4, 4)), expected))
        with self.assertRaises(DimensionError):
            upsample_nearest(x, (3, 4))

    def test_downsample_mean(self):
        x = as_tensor(np.arange(16).reshape(4, 4))
        self.assertEqual(downsample_mean(x, (2, 2)).tolist(), [[2.5, 4.5], [10.5, 12.5]])
        with self.assertRaises(DimensionError):
            downsample_mean(x, (3, 3))

    def test_pure(self):
        x = torch.from_numpy(Rng(5).normal(size=(6, 6, 2)))
        kernel = torch.from_numpy(Rng(6).normal(size=(3, 3, 2, 2)))
        self.assertTrue(torch.equal(conv2d(x, kernel, stride=2), conv2d(x.clone(), kernel.clone(), stride=2)))


class TestRng(unittest.TestCase):
    """Seeded generator"""

    def test_same_seed_same_draws(self):
        self.assertTrue(np.array_equal(Rng(42).normal(size=10), Rng(42).normal(size=10)))
        self.assertFalse(np.array_equal(Rng(42).normal(size=10), Rng(43).normal(size=10)))

    def test_spawned_streams_are_reproducible_and_distinct(self):
        first = [child.random(4) for child in Rng(9).spawn(3)]
        second = [child.random(4) for child in Rng(9).spawn(3)]
        for a, b in zip(first, second):
            self.assertTrue(np.array_equal(a, b))
        self.assertFalse(np.array_equal(first[0], first[1]))

    def test_init_parameter(self):
        zeros = init_parameter(None, (3, 2))
        self.assertTrue(torch.equal(zeros.data, torch.zeros(3, 2, dtype=torch.float64)))
        param = init_parameter(Rng(1), (4, 5))
        self.assertTrue(torch.all(param.abs() <= 0.5))
        self.assertTrue(param.requires_grad)


class TestGradCheck(unittest.TestCase):
    """Finite-difference checker"""

    def test_square(self):
        x = torch.tensor([3.0], dtype=torch.float64, requires_grad=True)
        report = grad_check(lambda: (x * x).sum(), [x], names=['x'])
        self.assertLess(report.max_rel_error['x'], 1e-9)
        self.assertTrue(report.passed)

    def test_constant(self):
        x = torch.tensor([1.0, 2.0], dtype=torch.float64, requires_grad=True)
        report = grad_check(lambda: torch.tensor(4.0, dtype=torch.float64) + 0.0 * x.sum(), [x])
        self.assertEqual(report.max_rel_error['param0'], 0.0)

    def test_relative_error_floor(self):
        self.assertEqual(relative_error(0.0, 0.0), 0.0)
        self.assertAlmostEqual(relative_error(1e-9, 0.0), 0.1)

    def test_kernel_ops_randomized(self):
        for trial in range(10):
            rng = Rng(100 + trial)
            x = torch.from_numpy(rng.normal(size=(5, 5, 2))).requires_grad_(True)
            kernel = torch.from_numpy(rng.normal(size=(3, 3, 2, 3))).requires_grad_(True)
            weights = torch.from_numpy(rng.normal(size=(2, 3)))

            def f():
                y = tanh(conv2d(x, kernel, stride=2, pad_mode='replicate'))
                z = softmax(upsample_nearest(y, (6, 6)), axis=-1)
                return (pool(z, 'global-avg') * 3.0).sum() + sigmoid(matmul(x[0], weights)).sum()

            report = grad_check(f, [x, kernel], names=['x', 'kernel'])
            self.assertTrue(report.passed, report.max_rel_error)

    def test_non_finite(self):
        x = torch.tensor([0.0], dtype=torch.float64, requires_grad=True)
        with self.assertRaises(GradientCheckError):
            grad_check(lambda: torch.log(x).sum(), [x])

    def test_non_scalar(self):
        x = torch.ones(2, dtype=torch.float64, requires_grad=True)
        with self.assertRaises(GradientCheckError):
            grad_check(lambda: x * 2, [x])


if __name__ == '__main__':
    unittest.main()
