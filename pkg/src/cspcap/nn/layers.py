"""Layers with explicit forward/backward passes on ``(batch, length, channels)`` arrays."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Layer:
    """Base class. ``params``/``grads`` map names to arrays; ``buffers`` hold non-trainable state."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def output_shape(self, shape):
        return shape

    def clear(self):
        """Drop cached activations."""
        for name in [k for k in vars(self) if k.startswith("_cache")]:
            setattr(self, name, None)


def he_normal(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


def _im2col(xp: np.ndarray, k: int) -> np.ndarray:
    """Rows of ``k`` consecutive samples, tap-major: column ``tap * channels + channel``."""
    b, lp, c = xp.shape
    length = lp - k + 1
    return sliding_window_view(xp, k, axis=1).transpose(0, 1, 3, 2).reshape(b * length, k * c)


class Conv1D(Layer):
    """Stride-1 'same' convolution. Weights are ``(filters, kernel, in_channels)``."""

    def __init__(self, in_channels, filters, kernel_size=23, rng=None, dtype=np.float32, input_grad=True):
        super().__init__()
        if kernel_size % 2 != 1:
            raise ValueError("kernel_size must be odd for same padding")
        rng = np.random.default_rng() if rng is None else rng
        self.in_channels, self.filters, self.kernel_size = in_channels, filters, kernel_size
        self.input_grad = input_grad
        self.params["W"] = he_normal(rng, (filters, kernel_size, in_channels), kernel_size * in_channels, dtype)
        self.params["b"] = np.zeros(filters, dtype)
        self._cache = None

    @property
    def pad(self):
        return self.kernel_size // 2

    def _weight_matrix(self):
        W = self.params["W"]
        return W.transpose(1, 2, 0).reshape(self.kernel_size * self.in_channels, self.filters)

    def forward(self, x, training=False):
        b, length, c = x.shape
        if c != self.in_channels:
            raise ValueError(f"expected {self.in_channels} input channels, got {c}")
        xp = np.pad(x, ((0, 0), (self.pad, self.pad), (0, 0)))
        y = _im2col(xp, self.kernel_size) @ self._weight_matrix()
        y += self.params["b"]
        if training:
            self._cache = xp
        return y.reshape(b, length, self.filters)

    def backward(self, dout):
        xp = self._cache
        b, length, f = dout.shape
        k = self.kernel_size
        d2 = dout.reshape(b * length, f)
        dWm = _im2col(xp, k).T @ d2
        self.grads["W"] = dWm.reshape(k, self.in_channels, f).transpose(2, 0, 1).copy()
        self.grads["b"] = d2.sum(axis=0)
        if not self.input_grad:
            return None
        # Input gradient is a correlation of the padded output gradient with the flipped kernel.
        dp = np.pad(dout, ((0, 0), (self.pad, self.pad), (0, 0)))
        Wf = self.params["W"][:, ::-1, :].transpose(1, 0, 2).reshape(k * f, self.in_channels)
        return (_im2col(dp, k) @ Wf).reshape(b, length, self.in_channels)

    def output_shape(self, shape):
        return shape[:-1] + (self.filters,)


class BatchNorm(Layer):
    """Per-channel normalization over batch and length axes."""

    def __init__(self, channels, momentum=0.9, eps=1e-5, dtype=np.float32):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.params["gamma"] = np.ones(channels, dtype)
        self.params["beta"] = np.zeros(channels, dtype)
        self.buffers["running_mean"] = np.zeros(channels, dtype)
        self.buffers["running_var"] = np.ones(channels, dtype)
        self._cache = None

    def forward(self, x, training=False):
        if training:
            if x.shape[0] < 2:
                raise ValueError("batch norm needs a batch of at least 2 in training mode")
            mean = x.mean(axis=(0, 1))
            var = np.maximum((x * x).mean(axis=(0, 1)) - mean * mean, 0)
            m = self.momentum
            self.buffers["running_mean"] = (m * self.buffers["running_mean"] + (1 - m) * mean).astype(x.dtype)
            self.buffers["running_var"] = (m * self.buffers["running_var"] + (1 - m) * var).astype(x.dtype)
        else:
            mean, var = self.buffers["running_mean"], self.buffers["running_var"]
        inv_std = (1.0 / np.sqrt(var + self.eps)).astype(x.dtype)
        xhat = x - mean
        xhat *= inv_std
        if training:
            self._cache = (xhat, inv_std)
        y = xhat * self.params["gamma"]
        y += self.params["beta"]
        return y

    def backward(self, dout):
        xhat, inv_std = self._cache
        n = dout.shape[0] * dout.shape[1]
        self.grads["gamma"] = (dout * xhat).sum(axis=(0, 1))
        self.grads["beta"] = dout.sum(axis=(0, 1))
        g = self.params["gamma"]
        # dx = gamma * inv_std * (dout - mean(dout) - xhat * mean(dout * xhat))
        dx = dout - self.grads["beta"] / n
        dx -= xhat * (self.grads["gamma"] / n)
        dx *= g * inv_std
        return dx


class ReLU(Layer):
    def __init__(self):
        super().__init__()
        self._cache = None

    def forward(self, x, training=False):
        if training:
            self._cache = x > 0
        return np.maximum(x, 0)

    def backward(self, dout):
        return dout * self._cache


class MaxPool1D(Layer):
    """Non-overlapping max pooling over windows of 2 samples."""

    def __init__(self, window=2):
        super().__init__()
        if window != 2:
            raise ValueError("only a pool window of 2 is supported")
        self.window = window
        self._cache = None

    def forward(self, x, training=False):
        if x.shape[1] % 2:
            raise ValueError(f"length {x.shape[1]} is not divisible by the pool window 2")
        even, odd = x[:, 0::2, :], x[:, 1::2, :]
        if training:
            self._cache = even >= odd
        return np.maximum(even, odd)

    def backward(self, dout):
        first = self._cache
        b, half, c = dout.shape
        dx = np.empty((b, 2 * half, c), dout.dtype)
        np.multiply(dout, first, out=dx[:, 0::2, :])
        np.multiply(dout, ~first, out=dx[:, 1::2, :])
        return dx

    def output_shape(self, shape):
        return shape[:-2] + (shape[-2] // self.window, shape[-1])


class GlobalAvgPool1D(Layer):
    def __init__(self):
        super().__init__()
        self._cache = None

    def forward(self, x, training=False):
        if training:
            self._cache = x.shape
        return x.mean(axis=1)

    def backward(self, dout):
        b, length, c = self._cache
        return np.broadcast_to(dout[:, None, :] / dout.dtype.type(length), (b, length, c)).copy()

    def output_shape(self, shape):
        return shape[:-2] + (shape[-1],)


class Dense(Layer):
    """Affine map ``x @ W + b`` with ``W`` of shape ``(in, out)``."""

    def __init__(self, in_features, out_features, rng=None, dtype=np.float32):
        super().__init__()
        rng = np.random.default_rng() if rng is None else rng
        self.in_features, self.out_features = in_features, out_features
        self.params["W"] = he_normal(rng, (in_features, out_features), in_features, dtype)
        self.params["b"] = np.zeros(out_features, dtype)
        self._cache = None

    def forward(self, x, training=False):
        if x.shape[-1] != self.in_features:
            raise ValueError(f"expected {self.in_features} inputs, got {x.shape[-1]}")
        if training:
            self._cache = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        x = self._cache
        self.grads["W"] = x.T @ dout
        self.grads["b"] = dout.sum(axis=0)
        return dout @ self.params["W"].T

    def output_shape(self, shape):
        return shape[:-1] + (self.out_features,)


class Sequential(Layer):
    def __init__(self, layers):
        super().__init__()
        self.layers = list(layers)

    def forward(self, x, training=False):
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
            if dout is None:
                break
        return dout

    def named_layers(self, prefix=""):
        for k, layer in enumerate(self.layers):
            yield f"{prefix}{k}", layer

    def clear(self):
        for layer in self.layers:
            layer.clear()
