"""Forward-only toy versions of the recurrent flow network's building blocks.

Everything operates on channel-first numpy arrays ``(C, h, w)``. Weights are
random (seeded) and never trained; the blocks exist so that shapes, gating
ranges and symmetry properties can be checked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError

SCALES = {"low": 8, "high": 4}
WEIGHT_RANGE = 0.1


@dataclass(frozen=True)
class FeatureMap:
    values: np.ndarray  # (C, h, w)
    scale: str = "low"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise ConfigError(f"feature maps are (C, h, w), got shape {v.shape}")
        if self.scale not in SCALES:
            raise ConfigError(f"scale must be one of {tuple(SCALES)}")
        if not np.all(np.isfinite(v)):
            raise ConfigError("feature map contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class HiddenPair:
    h_low: np.ndarray  # (C, H/8, W/8)
    h_high: np.ndarray  # (C, H/4, W/4)

    def __post_init__(self):
        lo, hi = self.h_low.shape, self.h_high.shape
        if lo[0] != hi[0] or (2 * lo[1], 2 * lo[2]) != hi[1:]:
            raise ConfigError(f"high-scale state {hi} is not twice the low-scale state {lo}")


def scale_shape(height, width, scale):
    f = SCALES[scale]
    if height % 8 or width % 8:
        raise ConfigError(f"input resolution {height}x{width} must be divisible by 8")
    return height // f, width // f


def _check_seq(seq, scale=None):
    if len(seq) < 2:
        raise ConfigError("sequences need at least two time steps")
    shapes = {f.shape for f in seq}
    if len(shapes) != 1:
        raise ConfigError(f"feature maps differ in shape: {sorted(shapes)}")
    if scale is not None and any(f.scale != scale for f in seq):
        raise ConfigError(f"expected {scale}-scale feature maps")


def correlation_volumes(seq):
    """Boundary-anchored correlations ``C_f^t = F^1 (F^t)^T / sqrt(D)``, ``C_b^t = F^t (F^B)^T / sqrt(D)``.

    Features are flattened to one ``D = C`` vector per position, so each volume
    is an (h*w, h*w) matrix.
    """
    _check_seq(seq, "low")
    C = seq[0].shape[0]
    flat = [f.values.reshape(C, -1).T for f in seq]
    norm = np.sqrt(C)
    first, last = flat[0], flat[-1]
    fwd = [first @ f.T / norm for f in flat]
    bwd = [f @ last.T / norm for f in flat]
    return fwd, bwd


def madiff(seq):
    """Differences of high-scale features to the first and last time step."""
    _check_seq(seq, "high")
    first, last = seq[0].values, seq[-1].values
    return [f.values - first for f in seq], [f.values - last for f in seq]


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def conv3x3(x, weight, bias):
    """Zero-padded 3x3 convolution: ``x`` (Cin, h, w), ``weight`` (Cout, Cin, 3, 3)."""
    if weight.shape[1] != x.shape[0]:
        raise ConfigError(f"conv expects {weight.shape[1]} input channels, got {x.shape[0]}")
    patches = sliding_window_view(np.pad(x, ((0, 0), (1, 1), (1, 1))), (3, 3), axis=(1, 2))
    return np.einsum("chwij,ocij->ohw", patches, weight) + bias[:, None, None]


def conv1x1(x, weight, bias):
    return np.einsum("chw,oc->ohw", x, weight) + bias[:, None, None]


def upsample2(x):
    """Bilinear x2 (half-pixel centres, edge-clamped)."""
    c, h, w = x.shape

    def axis_weights(n):
        pos = (np.arange(2 * n) + 0.5) / 2.0 - 0.5
        lo = np.clip(np.floor(pos).astype(int), 0, n - 1)
        hi = np.clip(lo + 1, 0, n - 1)
        frac = np.clip(pos - np.floor(pos), 0.0, 1.0)
        frac = np.where(pos < 0, 0.0, frac)
        return lo, hi, frac

    ly, hy, fy = axis_weights(h)
    lx, hx, fx = axis_weights(w)
    rows = x[:, ly, :] * (1 - fy)[None, :, None] + x[:, hy, :] * fy[None, :, None]
    return rows[:, :, lx] * (1 - fx) + rows[:, :, hx] * fx


def downsample2(x):
    """Bilinear /2 with half-pixel centres, i.e. the mean of each 2x2 block."""
    c, h, w = x.shape
    return x.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))


@dataclass(frozen=True)
class ConvWeights:
    weight: np.ndarray
    bias: np.ndarray


@dataclass(frozen=True)
class UnitWeights:
    """Weaving gate plus a convolutional GRU (update, reset, candidate)."""

    gate: ConvWeights
    z: ConvWeights
    r: ConvWeights
    q: ConvWeights


@dataclass(frozen=True)
class SAUWeights:
    gmu: UnitWeights
    dru: UnitWeights
    fuse_low: ConvWeights
    fuse_high: ConvWeights
    hidden: int
    in_low: int
    in_high: int


def _conv(rng, c_out, c_in, k=3):
    shape = (c_out, c_in, k, k) if k == 3 else (c_out, c_in)
    return ConvWeights(rng.uniform(-WEIGHT_RANGE, WEIGHT_RANGE, shape), rng.uniform(-WEIGHT_RANGE, WEIGHT_RANGE, c_out))


def _unit(rng, hidden, c_in):
    return UnitWeights(
        gate=_conv(rng, hidden, 2 * hidden + c_in),
        z=_conv(rng, hidden, hidden + c_in),
        r=_conv(rng, hidden, hidden + c_in),
        q=_conv(rng, hidden, hidden + c_in),
    )


def init_weights(hidden, in_low, in_high, seed=0):
    """Uniform(-0.1, 0.1) weights from a seeded generator."""
    rng = np.random.default_rng(seed)
    return SAUWeights(
        _unit(rng, hidden, in_low),
        _unit(rng, hidden, in_high),
        _conv(rng, hidden, 2 * hidden, k=1),
        _conv(rng, hidden, 2 * hidden, k=1),
        hidden,
        in_low,
        in_high,
    )


def zero_weights(hidden, in_low, in_high):
    def zc(c_out, c_in, k=3):
        shape = (c_out, c_in, k, k) if k == 3 else (c_out, c_in)
        return ConvWeights(np.zeros(shape), np.zeros(c_out))

    def zu(c_in):
        return UnitWeights(zc(hidden, 2 * hidden + c_in), zc(hidden, hidden + c_in), zc(hidden, hidden + c_in), zc(hidden, hidden + c_in))

    return SAUWeights(zu(in_low), zu(in_high), zc(hidden, 2 * hidden, 1), zc(hidden, 2 * hidden, 1), hidden, in_low, in_high)


def weaving_gate(h_prev, h_other, x_t, weights):
    """``g = sigmoid(conv3x3([h_prev, h_other, x_t]))``; returns ``(h_mix, g)``."""
    if h_prev.shape != h_other.shape:
        raise ConfigError(f"state shapes differ: {h_prev.shape} vs {h_other.shape}")
    g = sigmoid(conv3x3(np.concatenate([h_prev, h_other, x_t]), weights.weight, weights.bias))
    return g * h_other + (1.0 - g) * h_prev, g


def _gru(h, x, w):
    hx = np.concatenate([h, x])
    z = sigmoid(conv3x3(hx, w.z.weight, w.z.bias))
    r = sigmoid(conv3x3(hx, w.r.weight, w.r.bias))
    q = np.tanh(conv3x3(np.concatenate([r * h, x]), w.q.weight, w.q.bias))
    return (1.0 - z) * h + z * q


def gmu(h_low, h_high_resampled, x_low, w):
    """Low-scale update: weave in the downsampled detail state, then a GRU step."""
    mix, _ = weaving_gate(h_low, h_high_resampled, x_low, w.gate)
    return _gru(mix, x_low, w)


def dru(h_high, x_high, h_low_resampled, w):
    """High-scale update: weave in the upsampled memory state, then a GRU step."""
    mix, _ = weaving_gate(h_high, h_low_resampled, x_high, w.gate)
    return _gru(mix, x_high, w)


def _sau_step(state, x_low, x_high, w):
    h_low = gmu(state.h_low, downsample2(state.h_high), x_low, w.gmu)
    h_high = dru(state.h_high, x_high, upsample2(h_low), w.dru)
    return HiddenPair(h_low, h_high)


def initial_state(hidden, low_shape):
    h, w = low_shape
    return HiddenPair(np.zeros((hidden, h, w)), np.zeros((hidden, 2 * h, 2 * w)))


def bru_pass(fwd_inputs, bwd_inputs, weights, bwd_weights=None, init=None):
    """Bidirectional recurrent accumulation.

    ``fwd_inputs`` / ``bwd_inputs`` are length-``B`` lists of ``(x_low, x_high)``
    pairs indexed by time step. The forward chain runs t = 1..B, the backward
    chain t = B..1; both lists of states are returned indexed by t, with the
    fused state built from the forward state at B and the backward state at 1.
    """
    B = len(fwd_inputs)
    if B < 2 or len(bwd_inputs) != B:
        raise ConfigError(f"need two input sequences of equal length >= 2, got {B} and {len(bwd_inputs)}")
    bwd_weights = weights if bwd_weights is None else bwd_weights
    low_shape = fwd_inputs[0][0].shape[1:]
    start = initial_state(weights.hidden, low_shape) if init is None else init

    fwd, state = [], start
    for x_low, x_high in fwd_inputs:
        state = _sau_step(state, x_low, x_high, weights)
        fwd.append(state)
    bwd, state = [None] * B, start
    for t in range(B - 1, -1, -1):
        state = _sau_step(state, *bwd_inputs[t], bwd_weights)
        bwd[t] = state

    f, b = fwd[-1], bwd[0]
    fused = HiddenPair(
        conv1x1(np.concatenate([f.h_low, b.h_low]), weights.fuse_low.weight, weights.fuse_low.bias),
        conv1x1(np.concatenate([f.h_high, b.h_high]), weights.fuse_high.weight, weights.fuse_high.bias),
    )
    return fwd, bwd, fused
