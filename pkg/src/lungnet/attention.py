"""Squeeze-and-Excitation channel attention.

The block pools each channel of a feature map to one statistic per sample
(squeeze), pushes the channel vector through a two-layer bottleneck MLP with
a sigmoid gate (excite), and rescales every channel by its gate (scale).
Output shape always equals input shape, and because gates live strictly in
(0, 1) the block can only attenuate, never amplify.

The three stages are exposed as standalone functions; ``SEBlock`` composes
exactly those functions so the composite forward is bit-identical to running
the pipeline by hand.
"""

import numpy as np

from .errors import ShapeError
from .layers import DTYPE, Layer, he_init, sigmoid
from .rng import make_rng


def reduced_channels(channels, reduction):
    """Bottleneck width: channels/reduction, floored, clamped to >= 1."""
    return max(channels // reduction, 1)


def se_squeeze(u):
    """Per-sample, per-channel spatial mean: (N, C, H, W) -> (N, C)."""
    if u.ndim != 4:
        raise ShapeError(f"se_squeeze expects rank-4 NCHW input, got rank {u.ndim}")
    return u.mean(axis=(2, 3))


def se_excite(z, w1, w2, b1=None, b2=None):
    """Gate vector sigmoid(W2 @ relu(W1 @ z)) per sample: (N, C) -> (N, C)."""
    if z.ndim != 2:
        raise ShapeError(f"se_excite expects rank-2 (N, C) input, got rank {z.ndim}")
    if w1.shape[1] != z.shape[1]:
        raise ShapeError(
            f"se_excite channel mismatch: z has {z.shape[1]} channels, "
            f"first weight expects {w1.shape[1]}")
    if w2.shape != (w1.shape[1], w1.shape[0]):
        raise ShapeError(
            f"se_excite weight shapes inconsistent: {w1.shape} then {w2.shape}")
    a1 = z @ w1.T
    if b1 is not None:
        a1 = a1 + b1
    h = np.maximum(a1, 0)
    a2 = h @ w2.T
    if b2 is not None:
        a2 = a2 + b2
    return sigmoid(a2)


def se_scale(u, s):
    """Channel-wise broadcast multiply of gates onto the feature map."""
    if u.ndim != 4:
        raise ShapeError(f"se_scale expects rank-4 NCHW input, got rank {u.ndim}")
    if s.shape != u.shape[:2]:
        raise ShapeError(
            f"se_scale gate shape {s.shape} does not match feature map "
            f"batch/channel dims {u.shape[:2]}")
    return u * s[:, :, None, None]


class SEBlock(Layer):
    """Composite squeeze -> excite -> scale layer with learned gate weights.

    Bottleneck weights are He-initialized, biases start at zero so the block
    gates every channel by sigmoid(0) = 0.5 at initialization.  The input
    gradient combines the direct scale path and the path through the squeeze
    statistics.
    """

    def __init__(self, channels, reduction=16, rng=None):
        super().__init__()
        if channels < 1 or reduction < 1:
            raise ShapeError(
                f"SE block needs positive channels/reduction, got {channels}/{reduction}")
        self.channels = channels
        self.reduction = reduction
        hidden = reduced_channels(channels, reduction)
        rng = rng if rng is not None else make_rng(0)
        self._register("w1", he_init((hidden, channels), rng))
        self._register("b1", np.zeros(hidden, dtype=DTYPE))
        self._register("w2", he_init((channels, hidden), rng))
        self._register("b2", np.zeros(channels, dtype=DTYPE))

    def forward(self, u, training=False):
        p = self.params
        z = se_squeeze(u)
        a1 = z @ p["w1"].T + p["b1"]
        h = np.maximum(a1, 0)
        s = sigmoid(h @ p["w2"].T + p["b2"])
        out = se_scale(u, s)
        self._cache = (u, z, a1 > 0, h, s)
        return out

    def backward(self, grad_out):
        u, z, relu_mask, h, s = self._take_cache()
        p = self.params
        n, c, hh, ww = u.shape

        gs = (grad_out * u).sum(axis=(2, 3))
        grad_u = grad_out * s[:, :, None, None]

        da2 = gs * s * (1.0 - s)
        self.grads["w2"] = da2.T @ h
        self.grads["b2"] = da2.sum(axis=0)

        da1 = (da2 @ p["w2"]) * relu_mask
        self.grads["w1"] = da1.T @ z
        self.grads["b1"] = da1.sum(axis=0)

        gz = da1 @ p["w1"]
        grad_u += (gz / (hh * ww))[:, :, None, None]
        return grad_u
