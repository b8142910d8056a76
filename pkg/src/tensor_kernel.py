#!/usr/bin/env python3
"""
Tensor Kernel

Dense float64 tensor operations used on the training path, laid out
channels-last as (..., h, w, c), plus the seeded random generator and the
central-difference gradient checker.

Derivatives come from torch autograd; grad_check is the contract that keeps
them honest.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F

from .exceptions import DimensionError, GradientCheckError

DTYPE = torch.float64

torch.set_default_dtype(DTYPE)


class Rng:
    """
    Seedable generator shared by every stochastic component.

    Wraps NumPy's PCG64 (a permuted congruential generator with 128-bit
    state). The 64-bit user seed is expanded through SeedSequence, so a seed
    reproduces the same draws on every platform. Independent child streams
    come from SeedSequence.spawn.
    """

    def __init__(self, seed: Union[int, np.random.SeedSequence]):
        if isinstance(seed, np.random.SeedSequence):
            self._seed_sequence = seed
        else:
            self._seed_sequence = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
        self._generator = np.random.Generator(np.random.PCG64(self._seed_sequence))

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    @property
    def state(self) -> dict:
        return self._generator.bit_generator.state

    def spawn(self, count: int) -> List['Rng']:
        """Derive independent child generators (seed splitting)"""
        return [Rng(child) for child in self._seed_sequence.spawn(count)]

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._generator.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._generator.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self._generator.integers(low, high, size)

    def random(self, size=None):
        return self._generator.random(size)

    def choice(self, options, size=None, replace=True, p=None):
        return self._generator.choice(options, size=size, replace=replace, p=p)

    def permutation(self, n):
        return self._generator.permutation(n)

    def fan_in_uniform(self, shape: Sequence[int], fan_in: int) -> torch.Tensor:
        """Scaled uniform initialization U(-1/sqrt(fan_in), 1/sqrt(fan_in))"""
        bound = 1.0 / math.sqrt(max(fan_in, 1))
        values = self._generator.uniform(-bound, bound, size=tuple(shape))
        return torch.from_numpy(np.asarray(values, dtype=np.float64))


def init_parameter(rng: Optional[Rng], shape: Sequence[int], fan_in: Optional[int] = None) -> torch.nn.Parameter:
    """
    Trainable parameter drawn from rng with fan-in scaling, or zeros when rng is None

    Args:
        rng: Generator for the draw; None gives a zero-initialized parameter
        shape: Parameter shape
        fan_in: Fan-in for the uniform bound (defaults to the first extent)
    """
    if rng is None:
        return torch.nn.Parameter(torch.zeros(tuple(shape), dtype=DTYPE))
    fan_in = fan_in if fan_in is not None else int(shape[0])
    return torch.nn.Parameter(rng.fan_in_uniform(shape, fan_in))


def as_tensor(data, shape: Optional[Sequence[int]] = None) -> torch.Tensor:
    """Build a float64 tensor, optionally checking the row-major element count"""
    values = torch.as_tensor(np.asarray(data, dtype=np.float64))
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if math.prod(shape) != values.numel():
            raise DimensionError(f"Shape {shape} does not match {values.numel()} values")
        values = values.reshape(shape)
    return values


def matmul(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """
    Matrix product of a[..., m, k] and b[k, n]

    Args:
        a: Left operand, optional leading batch axes
        b: Right operand, 2-D

    Returns:
        Tensor of shape [..., m, n]
    """
    if a.dim() < 1 or b.dim() != 2:
        raise DimensionError(f"matmul expects a[..., m, k] and b[k, n], got {tuple(a.shape)} and {tuple(b.shape)}")
    if a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul inner extents differ: {a.shape[-1]} vs {b.shape[0]}")
    return a @ b


def linear(x: torch.Tensor, weight: torch.Tensor, bias: Optional[torch.Tensor] = None) -> torch.Tensor:
    """x[..., k] @ weight[k, n] + bias[n]"""
    out = matmul(x.unsqueeze(-2), weight).squeeze(-2)
    return out if bias is None else out + bias


def _to_nchw(x: torch.Tensor) -> Tuple[torch.Tensor, Tuple[int, ...]]:
    if x.dim() < 3:
        raise DimensionError(f"Expected (..., h, w, c) input, got shape {tuple(x.shape)}")
    lead = tuple(x.shape[:-3])
    return x.reshape(-1, *x.shape[-3:]).permute(0, 3, 1, 2), lead


def _from_nchw(x: torch.Tensor, lead: Tuple[int, ...]) -> torch.Tensor:
    x = x.permute(0, 2, 3, 1)
    return x.reshape(*lead, *x.shape[1:])


def conv2d(input: torch.Tensor, kernel: torch.Tensor, bias: Optional[torch.Tensor] = None,
           stride: int = 1, padding: str = 'same', pad_mode: str = 'zeros') -> torch.Tensor:
    """
    2-D cross-correlation (no kernel flip), channels-last

    Args:
        input: Tensor [..., h, w, cin]
        kernel: Tensor [kh, kw, cin, cout], kh and kw odd
        bias: Optional tensor [cout]
        stride: Positive step
        padding: 'same' (pad kh//2, kw//2) or 'valid'
        pad_mode: 'zeros' or 'replicate' for 'same' padding

    Returns:
        Tensor [..., h', w', cout]
    """
    if kernel.dim() != 4:
        raise DimensionError(f"conv2d kernel must be [kh, kw, cin, cout], got {tuple(kernel.shape)}")
    kh, kw, cin, cout = kernel.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise DimensionError(f"conv2d kernel extents must be odd, got {kh}x{kw}")
    if stride < 1:
        raise DimensionError(f"conv2d stride must be >= 1, got {stride}")
    if padding not in ('same', 'valid'):
        raise DimensionError(f"conv2d padding must be 'same' or 'valid', got {padding!r}")
    x, lead = _to_nchw(input)
    if x.shape[1] != cin:
        raise DimensionError(f"conv2d input has {x.shape[1]} channels, kernel expects {cin}")
    if padding == 'same' and (kh > 1 or kw > 1):
        pads = (kw // 2, kw // 2, kh // 2, kh // 2)
        if pad_mode == 'replicate':
            x = F.pad(x, pads, mode='replicate')
        elif pad_mode == 'zeros':
            x = F.pad(x, pads)
        else:
            raise DimensionError(f"Unknown pad mode {pad_mode!r}")
    if kh > x.shape[2] or kw > x.shape[3]:
        raise DimensionError(f"conv2d kernel {kh}x{kw} larger than padded input {x.shape[2]}x{x.shape[3]}")
    weight = kernel.permute(3, 2, 0, 1).contiguous()
    out = F.conv2d(x, weight, bias, stride=stride)
    return _from_nchw(out, lead)


def sigmoid(x: torch.Tensor) -> torch.Tensor:
    return torch.sigmoid(x)


def tanh(x: torch.Tensor) -> torch.Tensor:
    return torch.tanh(x)


def relu(x: torch.Tensor) -> torch.Tensor:
    return torch.relu(x)


def softmax(x: torch.Tensor, axis: int = -1) -> torch.Tensor:
    """Numerically stable softmax along one axis"""
    return torch.softmax(x, dim=axis)


POOL_KINDS = ('global-avg', 'global-max', 'channel-avg', 'channel-max')


def pool(input: torch.Tensor, kind: str) -> torch.Tensor:
    """
    Reduce a channels-last map

    global-* reduce (h, w) to a c-vector; channel-* reduce c to an h x w map.
    Leading batch axes are kept.
    """
    if input.dim() < 3 or input.numel() == 0:
        raise DimensionError(f"pool expects a nonempty (..., h, w, c) tensor, got {tuple(input.shape)}")
    if kind == 'global-avg':
        return input.mean(dim=(-3, -2))
    if kind == 'global-max':
        return input.amax(dim=(-3, -2))
    if kind == 'channel-avg':
        return input.mean(dim=-1)
    if kind == 'channel-max':
        return input.amax(dim=-1)
    raise DimensionError(f"Unknown pool kind {kind!r}, expected one of {POOL_KINDS}")


def upsample_nearest(input: torch.Tensor, target: Tuple[int, int]) -> torch.Tensor:
    """Nearest-neighbor replication of (..., h, w, c) to (..., H, W, c) by integer factors"""
    if input.dim() < 3:
        raise DimensionError(f"upsample_nearest expects (..., h, w, c), got {tuple(input.shape)}")
    h, w = input.shape[-3], input.shape[-2]
    H, W = target
    if H < h or W < w or H % h or W % w:
        raise DimensionError(f"upsample_nearest needs integer scale factors, got {h}x{w} -> {H}x{W}")
    out = input
    if H != h:
        out = out.repeat_interleave(H // h, dim=-3)
    if W != w:
        out = out.repeat_interleave(W // w, dim=-2)
    return out


def downsample_mean(input: torch.Tensor, target: Tuple[int, int]) -> torch.Tensor:
    """Block-average (..., H, W) maps down to (..., h, w) by integer factors"""
    H, W = input.shape[-2], input.shape[-1]
    h, w = target
    if h > H or w > W or H % h or W % w:
        raise DimensionError(f"downsample_mean needs integer factors, got {H}x{W} -> {h}x{w}")
    lead = input.shape[:-2]
    blocks = input.reshape(*lead, h, H // h, w, W // w)
    return blocks.mean(dim=(-3, -1))


@dataclass
class GradCheckReport:
    """Outcome of a finite-difference gradient check"""
    max_rel_error: Dict[str, float] = field(default_factory=dict)
    checked_entries: Dict[str, int] = field(default_factory=dict)
    tolerance: float = 1e-4

    @property
    def worst(self) -> Tuple[Optional[str], float]:
        if not self.max_rel_error:
            return None, 0.0
        name = max(self.max_rel_error, key=self.max_rel_error.get)
        return name, self.max_rel_error[name]

    @property
    def passed(self) -> bool:
        return all(err <= self.tolerance for err in self.max_rel_error.values())


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(f: Callable[[], torch.Tensor], params: Sequence[torch.Tensor], step: float = 1e-5,
               tol: float = 1e-4, names: Optional[Sequence[str]] = None,
               max_entries: Optional[int] = None, rng: Optional[Rng] = None) -> GradCheckReport:
    """
    Compare autograd gradients with central differences

    Args:
        f: Zero-argument callable returning a scalar tensor computed from params
        params: Leaf tensors with requires_grad=True
        step: Finite-difference step
        tol: Relative tolerance used for the report's pass flag
        names: Optional labels for params
        max_entries: Check at most this many entries per parameter (sampled)
        rng: Generator used for entry sampling

    Returns:
        GradCheckReport with the max relative error per parameter
    """
    names = list(names) if names is not None else [f"param{i}" for i in range(len(params))]
    if len(names) != len(params):
        raise GradientCheckError("names and params differ in length")

    value = f()
    if value.numel() != 1:
        raise GradientCheckError("f must return a scalar")
    if not torch.isfinite(value).all():
        raise GradientCheckError("f is not finite at the base point")
    grads = torch.autograd.grad(value, list(params), allow_unused=True)

    sampler = rng or Rng(0)
    report = GradCheckReport(tolerance=tol)
    with torch.no_grad():
        for name, param, grad in zip(names, params, grads):
            analytic = torch.zeros_like(param) if grad is None else grad
            flat = param.view(-1)
            flat_grad = analytic.reshape(-1)
            indices = range(flat.numel())
            if max_entries is not None and flat.numel() > max_entries:
                indices = sorted(int(i) for i in sampler.choice(flat.numel(), size=max_entries, replace=False))
            worst = 0.0
            count = 0
            for index in indices:
                original = flat[index].item()
                flat[index] = original + step
                plus = f()
                flat[index] = original - step
                minus = f()
                flat[index] = original
                if not (torch.isfinite(plus) and torch.isfinite(minus)):
                    raise GradientCheckError("f is not finite under perturbation", name, index)
                numeric = (plus.item() - minus.item()) / (2.0 * step)
                worst = max(worst, relative_error(flat_grad[index].item(), numeric))
                count += 1
            report.max_rel_error[name] = worst
            report.checked_entries[name] = count
    return report
