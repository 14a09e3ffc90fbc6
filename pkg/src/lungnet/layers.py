"""Differentiable layer primitives with hand-derived backward passes.

Values are plain numpy arrays in NCHW layout, float32 in production; the
math is dtype-generic so verification harnesses can run the same layers in
float64.  Each layer caches during forward exactly what its backward needs,
and backward consumes that cache, so a backward call without a matching
forward is a usage error.  There is no autodiff tape: every backward below
is the analytic derivative of its forward, written out by hand.
"""

import math

import numpy as np

from .errors import ConfigError, ShapeError, UsageError
from .rng import make_rng

DTYPE = np.float32


def he_init(shape, rng):
    """Sample weights from normal(0, sqrt(2 / fan_in)).

    fan_in is inferred from the shape: trailing dims for rank >= 2 (conv and
    linear weights), the single dim for rank 1.
    """
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0:
        raise ConfigError("he_init requires a non-empty shape")
    if any(s <= 0 for s in shape):
        raise ConfigError(f"he_init shape must be positive, got {shape}")
    fan_in = int(np.prod(shape[1:])) if len(shape) >= 2 else shape[0]
    std = math.sqrt(2.0 / fan_in)
    return (rng.standard_normal(shape) * std).astype(DTYPE)


def sigmoid(x):
    """Numerically stable logistic, clamped strictly inside (0, 1).

    The clamp keeps the open-interval contract even where exp() saturates in
    float32, so gating by the result always strictly attenuates.
    """
    x = np.asarray(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    info = np.finfo(out.dtype)
    return np.clip(out, info.tiny, 1.0 - info.epsneg)


class Layer:
    """Base layer: named params/grads, running stats, and a trainable flag.

    ``params`` and ``grads`` are parallel dicts (grads always match param
    shapes); ``running`` holds non-learned state such as batchnorm running
    statistics.  Optimizers must leave params of non-trainable layers
    bit-identical.
    """

    def __init__(self):
        self.params = {}
        self.grads = {}
        self.running = {}
        self.trainable = True
        self._cache = None

    def _register(self, name, value):
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, grad_out):
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise UsageError(
                f"{type(self).__name__}.backward called without a matching forward"
            )
        cache, self._cache = self._cache, None
        return cache

    def astype(self, dtype):
        """Convert all state to dtype in place (for float64 verification)."""
        for d in (self.params, self.grads, self.running):
            for k in d:
                d[k] = d[k].astype(dtype)
        return self


class Identity(Layer):
    def forward(self, x, training=False):
        self._cache = ()
        return x

    def backward(self, grad_out):
        self._take_cache()
        return grad_out


def _im2col(xp, k, stride, groups, ho, wo):
    """Grouped column matrix (N, G, C/G*k*k, Ho*Wo) from padded input."""
    n, c, _, _ = xp.shape
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    win = win.reshape(n, groups, c // groups, ho, wo, k, k)
    win = win.transpose(0, 1, 2, 5, 6, 3, 4)
    return win.reshape(n, groups, (c // groups) * k * k, ho * wo)


class Conv2d(Layer):
    """2D convolution (cross-correlation) with stride, zero padding, groups.

    Weight shape is (out_channels, in_channels/groups, k, k); setting
    groups == in_channels == out_channels gives a depthwise convolution.
    Implemented as im2col plus one batched matmul per forward.
    """

    def __init__(self, in_channels, out_channels, kernel_size, stride=1,
                 padding=0, groups=1, bias=True, rng=None):
        super().__init__()
        if in_channels % groups != 0:
            raise ConfigError(
                f"in_channels {in_channels} not divisible by groups {groups}")
        if out_channels % groups != 0:
            raise ConfigError(
                f"out_channels {out_channels} not divisible by groups {groups}")
        if kernel_size < 1 or stride < 1 or padding < 0:
            raise ConfigError("kernel_size/stride must be >= 1 and padding >= 0")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        self.groups = groups
        rng = rng if rng is not None else make_rng(0)
        self._register("weight", he_init(
            (out_channels, in_channels // groups, kernel_size, kernel_size), rng))
        if bias:
            self._register("bias", np.zeros(out_channels, dtype=DTYPE))

    def forward(self, x, training=False):
        if x.ndim != 4:
            raise ShapeError(f"conv2d expects rank-4 NCHW input, got rank {x.ndim}")
        n, c, h, w = x.shape
        if c != self.in_channels:
            raise ShapeError(
                f"conv2d channel axis mismatch: input has {c} channels, "
                f"layer expects {self.in_channels}")
        k, s, p, g = self.kernel_size, self.stride, self.padding, self.groups
        ho = (h + 2 * p - k) // s + 1
        wo = (w + 2 * p - k) // s + 1
        if ho <= 0 or wo <= 0:
            raise ShapeError(
                f"conv2d spatial axes collapse: input {h}x{w} with kernel {k}, "
                f"stride {s}, padding {p}")
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        cols = _im2col(xp, k, s, g, ho, wo)
        w2 = self.params["weight"].reshape(g, self.out_channels // g, -1)
        out = np.matmul(w2[None], cols).reshape(n, self.out_channels, ho, wo)
        if "bias" in self.params:
            out = out + self.params["bias"].reshape(1, -1, 1, 1)
        self._cache = (x.shape, xp, ho, wo)
        return out

    def backward(self, grad_out):
        x_shape, xp, ho, wo = self._take_cache()
        n, c, h, w = x_shape
        k, s, p, g = self.kernel_size, self.stride, self.padding, self.groups
        outg = self.out_channels // g
        go = grad_out.reshape(n, g, outg, ho * wo)
        if "bias" in self.params:
            self.grads["bias"] = grad_out.sum(axis=(0, 2, 3))
        cols = _im2col(xp, k, s, g, ho, wo)
        gw = np.matmul(go, cols.transpose(0, 1, 3, 2)).sum(axis=0)
        self.grads["weight"] = gw.reshape(self.params["weight"].shape)
        w2 = self.params["weight"].reshape(g, outg, -1)
        gcols = np.matmul(w2.transpose(0, 2, 1)[None], go)
        gc = gcols.reshape(n, c, k, k, ho, wo)
        gxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                gxp[:, :, i:i + s * ho:s, j:j + s * wo:s] += gc[:, :, i, j]
        return np.ascontiguousarray(gxp[:, :, p:p + h, p:p + w]) if p else gxp


class BatchNorm2d(Layer):
    """Per-channel batch normalization over (N, H, W).

    Training mode normalizes with batch statistics (population variance) and
    updates running stats as running <- (1-momentum)*running + momentum*batch;
    eval mode is a pure function of the input and the running stats.
    """

    def __init__(self, num_features, momentum=0.1, eps=1e-5):
        super().__init__()
        if eps <= 0:
            raise ConfigError(f"batchnorm eps must be positive, got {eps}")
        if not 0.0 <= momentum <= 1.0:
            raise ConfigError(f"batchnorm momentum must be in [0, 1], got {momentum}")
        self.num_features = num_features
        self.momentum = momentum
        self.eps = eps
        self._register("gamma", np.ones(num_features, dtype=DTYPE))
        self._register("beta", np.zeros(num_features, dtype=DTYPE))
        self.running["running_mean"] = np.zeros(num_features, dtype=DTYPE)
        self.running["running_var"] = np.ones(num_features, dtype=DTYPE)

    def forward(self, x, training=False):
        if x.ndim != 4:
            raise ShapeError(f"batchnorm expects rank-4 input, got rank {x.ndim}")
        if x.shape[1] != self.num_features:
            raise ShapeError(
                f"batchnorm channel axis mismatch: input has {x.shape[1]} channels, "
                f"layer expects {self.num_features}")
        if training:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            m = self.momentum
            rm, rv = self.running["running_mean"], self.running["running_var"]
            self.running["running_mean"] = ((1 - m) * rm + m * mean).astype(rm.dtype)
            self.running["running_var"] = ((1 - m) * rv + m * var).astype(rv.dtype)
        else:
            mean = self.running["running_mean"].astype(x.dtype)
            var = self.running["running_var"].astype(x.dtype)
        inv_std = 1.0 / np.sqrt(var + np.asarray(self.eps, dtype=x.dtype))
        xhat = (x - mean.reshape(1, -1, 1, 1)) * inv_std.reshape(1, -1, 1, 1)
        out = self.params["gamma"].reshape(1, -1, 1, 1) * xhat \
            + self.params["beta"].reshape(1, -1, 1, 1)
        self._cache = (xhat, inv_std, training)
        return out

    def backward(self, grad_out):
        xhat, inv_std, training = self._take_cache()
        self.grads["gamma"] = (grad_out * xhat).sum(axis=(0, 2, 3))
        self.grads["beta"] = grad_out.sum(axis=(0, 2, 3))
        dxhat = grad_out * self.params["gamma"].reshape(1, -1, 1, 1)
        inv = inv_std.reshape(1, -1, 1, 1)
        if not training:
            return dxhat * inv
        n, _, h, w = grad_out.shape
        m = n * h * w
        return (inv / m) * (
            m * dxhat
            - dxhat.sum(axis=(0, 2, 3), keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
        )


class ReLU6(Layer):
    def forward(self, x, training=False):
        self._cache = ((x > 0) & (x < 6),)
        return np.clip(x, 0.0, 6.0)

    def backward(self, grad_out):
        (mask,) = self._take_cache()
        return grad_out * mask


class Sigmoid(Layer):
    def forward(self, x, training=False):
        out = sigmoid(x)
        self._cache = (out,)
        return out

    def backward(self, grad_out):
        (out,) = self._take_cache()
        return grad_out * out * (1.0 - out)


class Linear(Layer):
    """Fully connected layer: y = x @ W.T + b with W of shape (out, in)."""

    def __init__(self, in_features, out_features, bias=True, rng=None):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        rng = rng if rng is not None else make_rng(0)
        self._register("weight", he_init((out_features, in_features), rng))
        if bias:
            self._register("bias", np.zeros(out_features, dtype=DTYPE))

    def forward(self, x, training=False):
        if x.ndim != 2:
            raise ShapeError(f"linear expects rank-2 (N, F) input, got rank {x.ndim}")
        if x.shape[1] != self.in_features:
            raise ShapeError(
                f"linear feature axis mismatch: input has {x.shape[1]} features, "
                f"layer expects {self.in_features}")
        out = x @ self.params["weight"].T
        if "bias" in self.params:
            out = out + self.params["bias"]
        self._cache = (x,)
        return out

    def backward(self, grad_out):
        (x,) = self._take_cache()
        self.grads["weight"] = grad_out.T @ x
        if "bias" in self.params:
            self.grads["bias"] = grad_out.sum(axis=0)
        return grad_out @ self.params["weight"]


class GlobalAvgPool(Layer):
    """Spatial mean per channel: (N, C, H, W) -> (N, C)."""

    def forward(self, x, training=False):
        if x.ndim != 4:
            raise ShapeError(f"global_avg_pool expects rank-4 input, got rank {x.ndim}")
        self._cache = (x.shape,)
        return x.mean(axis=(2, 3))

    def backward(self, grad_out):
        (shape,) = self._take_cache()
        _, _, h, w = shape
        g = (grad_out / (h * w))[:, :, None, None]
        return np.broadcast_to(g, shape).copy()


class Dropout(Layer):
    """Inverted dropout; identity when p == 0 or in eval mode."""

    def __init__(self, p=0.2, rng=None):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {p}")
        self.p = p
        self.rng = rng if rng is not None else make_rng(0)

    def forward(self, x, training=False):
        if not training or self.p == 0.0:
            self._cache = (None,)
            return x
        mask = self.rng.random(x.shape) >= self.p
        self._cache = (mask,)
        return x * mask / (1.0 - self.p)

    def backward(self, grad_out):
        (mask,) = self._take_cache()
        if mask is None:
            return grad_out
        return grad_out * mask / (1.0 - self.p)
