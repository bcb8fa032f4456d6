"""Feed-forward layers with hand-derived backward passes.

All layers operate on batched sequences shaped (batch, time, channels).
Each layer caches whatever its backward pass needs during forward, exposes
trainable arrays in ``params`` and fills ``grads`` (same keys) on backward.
Backward passes overwrite grads; one optimizer step per backward.
"""

from __future__ import annotations

import numpy as np


class ShapeMismatchError(ValueError):
    pass


class DegenerateBatchError(ValueError):
    pass


def uniform_init(rng, shape, fan_in: int, dtype) -> np.ndarray:
    """U(-k, k) with k = 1/sqrt(fan_in); zeros when no rng is given."""
    if rng is None:
        return np.zeros(shape, dtype=dtype)
    k = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-k, k, size=shape).astype(dtype)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Conv1d:
    """Temporal convolution, stride 1, zero 'same' padding, odd kernel."""

    def __init__(self, in_channels, out_channels, kernel_size, rng=None,
                 dtype=np.float32):
        if kernel_size % 2 != 1:
            raise ShapeMismatchError("kernel size must be odd")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        w = uniform_init(rng, (kernel_size, in_channels, out_channels),
                         in_channels * kernel_size, dtype)
        self.params = {"w": w, "b": np.zeros(out_channels, dtype=dtype)}
        self.grads = {}
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 3 or x.shape[2] != self.in_channels:
            raise ShapeMismatchError(
                f"expected (B, T, {self.in_channels}), got {x.shape}")
        pad = self.kernel_size // 2
        x_pad = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
        t = x.shape[1]
        w, b = self.params["w"], self.params["b"]
        y = np.broadcast_to(b, (x.shape[0], t, self.out_channels)).copy()
        for k in range(self.kernel_size):
            y += x_pad[:, k:k + t, :] @ w[k]
        self._cache = (x_pad, t)
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x_pad, t = self._cache
        w = self.params["w"]
        dw = np.empty_like(w)
        dx_pad = np.zeros_like(x_pad)
        for k in range(self.kernel_size):
            dw[k] = np.einsum("bti,bto->io", x_pad[:, k:k + t, :], dy)
            dx_pad[:, k:k + t, :] += dy @ w[k].T
        self.grads = {"w": dw, "b": dy.sum(axis=(0, 1))}
        pad = self.kernel_size // 2
        return dx_pad[:, pad:pad + t, :]


class ReLU:
    params: dict = {}
    grads: dict = {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0  # strict: no gradient at exactly 0
        return np.maximum(x, 0)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy * self._mask


class BatchNorm1d:
    """Per-channel normalization over the batch and time axes.

    Train mode normalizes with batch statistics (population variance) and
    updates running stats with momentum 0.1; eval mode uses running stats.
    """

    def __init__(self, channels, eps=1e-5, momentum=0.1, dtype=np.float32):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.params = {
            "gamma": np.ones(channels, dtype=dtype),
            "beta": np.zeros(channels, dtype=dtype),
        }
        self.buffers = {
            "running_mean": np.zeros(channels, dtype=dtype),
            "running_var": np.ones(channels, dtype=dtype),
        }
        self.grads = {}
        self._cache = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.ndim != 3 or x.shape[2] != self.channels:
            raise ShapeMismatchError(
                f"expected (B, T, {self.channels}), got {x.shape}")
        if train:
            if x.shape[0] * x.shape[1] == 1:
                raise DegenerateBatchError("batch x time == 1 in train mode")
            mean = x.mean(axis=(0, 1))
            var = x.var(axis=(0, 1))
            m = self.momentum
            self.buffers["running_mean"] = (
                (1 - m) * self.buffers["running_mean"] + m * mean
            ).astype(x.dtype)
            self.buffers["running_var"] = (
                (1 - m) * self.buffers["running_var"] + m * var
            ).astype(x.dtype)
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mean) * inv_std
        self._cache = (x_hat, inv_std, train)
        return self.params["gamma"] * x_hat + self.params["beta"]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x_hat, inv_std, train = self._cache
        gamma = self.params["gamma"]
        self.grads = {
            "gamma": (dy * x_hat).sum(axis=(0, 1)),
            "beta": dy.sum(axis=(0, 1)),
        }
        dx_hat = dy * gamma
        if not train:
            return dx_hat * inv_std
        n = dy.shape[0] * dy.shape[1]
        # Standard batch-norm gradient through the batch statistics.
        term_mean = dx_hat.sum(axis=(0, 1)) / n
        term_proj = (dx_hat * x_hat).sum(axis=(0, 1)) / n
        return inv_std * (dx_hat - term_mean - x_hat * term_proj)


class Dropout:
    """Inverted dropout with masks derived from (seed, layer_id, step).

    Masks come from a counter-based generator keyed on those three values,
    so a resumed run draws exactly the masks the uninterrupted run would.
    """

    params: dict = {}
    grads: dict = {}

    def __init__(self, p: float, layer_id: int):
        if not 0.0 <= p < 1.0:
            raise ValueError("dropout probability must be in [0, 1)")
        self.p = p
        self.layer_id = layer_id
        self.seed = 0
        self._mask = None

    def forward(self, x: np.ndarray, train: bool = False, step: int = 0):
        if not train or self.p == 0.0:
            self._mask = None
            return x
        key = np.array(
            [np.uint64(self.seed), (np.uint64(self.layer_id) << np.uint64(32))
             | np.uint64(step & 0xFFFFFFFF)],
            dtype=np.uint64,
        )
        gen = np.random.Generator(np.random.Philox(key=key))
        keep = gen.random(x.shape) >= self.p
        self._mask = keep.astype(x.dtype) / (1.0 - self.p)
        return x * self._mask

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._mask is None:
            return dy
        return dy * self._mask


class Linear:
    """Per-frame affine map: y = x @ w + b."""

    def __init__(self, in_features, out_features, rng=None, dtype=np.float32):
        self.in_features = in_features
        self.out_features = out_features
        self.params = {
            "w": uniform_init(rng, (in_features, out_features), in_features, dtype),
            "b": np.zeros(out_features, dtype=dtype),
        }
        self.grads = {}
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.in_features:
            raise ShapeMismatchError(
                f"expected trailing dim {self.in_features}, got {x.shape}")
        self._x = x
        return x @ self.params["w"] + self.params["b"]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._x
        self.grads = {
            "w": np.einsum("bti,bto->io", x, dy),
            "b": dy.sum(axis=(0, 1)),
        }
        return dy @ self.params["w"].T
