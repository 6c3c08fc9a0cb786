"""Layer objects with cached forward state and explicit backward passes.

A layer owns its parameters (plain numpy arrays) and remembers whatever the
backward pass needs from the latest forward call.  ``Network`` chains layers,
returns parameter gradients as a name-keyed dict and leaves parameter updates
to the optimizer.  One trainer owns one network; nothing here locks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import (
    _conv2d_backward_batch,
    _conv2d_batch,
    _maxpool2d_backward_batch,
    _maxpool2d_batch,
)


@dataclass(frozen=True)
class LayerSpec:
    """Declarative description of one layer, used to plan and verify stacks.

    ``channels`` is the output width (feature channels or dense units).
    Convolutions in this family use channels in {32, 64, 128}, odd filters
    in {3, 5, 7} and symmetric padding filter_size // 2; pooling is always
    2x2 stride 2 without padding.
    """

    kind: str  # conv | maxpool | dense | relu | dropout | softmax
    channels: int = 0
    filter_size: int = 0
    pad: int = 0
    dropout_p: float = 0.0

    def __post_init__(self):
        if self.kind not in ("conv", "maxpool", "dense", "relu", "dropout",
                             "softmax"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv":
            if self.channels not in (32, 64, 128):
                raise ValueError(f"conv channels must be 32/64/128, got "
                                 f"{self.channels}")
            if self.filter_size not in (3, 5, 7):
                raise ValueError(f"conv filter size must be 3/5/7, got "
                                 f"{self.filter_size}")
            if self.pad != self.filter_size // 2:
                raise ValueError(f"conv pad must be {self.filter_size // 2} "
                                 f"for filter {self.filter_size}, got {self.pad}")
        if self.kind == "maxpool" and (self.filter_size != 2 or self.pad != 0):
            raise ValueError("maxpool layers are fixed at 2x2, no padding")
        if not 0.0 <= self.dropout_p <= 1.0:
            raise ValueError(f"dropout_p must be in [0,1], got {self.dropout_p}")


class Layer:
    """Base class: stateless layers only override forward/backward."""

    name = "?"

    def forward(self, x: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def grads(self) -> dict[str, np.ndarray]:
        return {}

    def _need_cache(self, cache, what: str):
        if cache is None:
            raise RuntimeError(
                f"backward on layer {self.name!r} without a recorded forward "
                f"({what} missing)")
        return cache


class Conv2d(Layer):
    """Same-size stride-1 convolution; kernels (C_out, C_in, k, k)."""

    def __init__(self, name: str, in_channels: int, out_channels: int,
                 filter_size: int, rng: np.random.Generator,
                 dtype=np.float32):
        if filter_size % 2 == 0:
            raise ValueError(f"filter size must be odd, got {filter_size}")
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.filter_size = filter_size
        self.pad = filter_size // 2
        fan_in = in_channels * filter_size * filter_size
        limit = np.sqrt(6.0 / fan_in)  # uniform with variance 2/fan_in
        self.weight = rng.uniform(-limit, limit,
                                  (out_channels, in_channels, filter_size,
                                   filter_size)).astype(dtype)
        self.bias = np.zeros(out_channels, dtype=dtype)
        self._x = None
        self._gw = None
        self._gb = None

    def forward(self, x, train=False, rng=None):
        if x.shape[1] != self.in_channels:
            raise ValueError(
                f"{self.name}: input shape {tuple(x.shape)} has {x.shape[1]} "
                f"channels, kernels {tuple(self.weight.shape)} expect "
                f"{self.in_channels}")
        self._x = x
        return _conv2d_batch(x, self.weight, self.bias, self.pad)

    def backward(self, grad_out):
        x = self._need_cache(self._x, "input")
        grad_x, self._gw, self._gb = _conv2d_backward_batch(
            x, self.weight, self.pad, grad_out)
        return grad_x

    def params(self):
        return {f"{self.name}.weight": self.weight, f"{self.name}.bias": self.bias}

    def grads(self):
        return {f"{self.name}.weight": self._gw, f"{self.name}.bias": self._gb}


class MaxPool2d(Layer):
    """2x2 max pooling, stride 2.  Ties route to the first window position."""

    def __init__(self, name: str):
        self.name = name
        self._idx = None

    def forward(self, x, train=False, rng=None):
        h, w = x.shape[2], x.shape[3]
        if h % 2 or w % 2:
            raise ValueError(f"{self.name}: spatial dims must be even, got {h}x{w}")
        out, self._idx = _maxpool2d_batch(x)
        return out

    def backward(self, grad_out):
        idx = self._need_cache(self._idx, "argmax indices")
        return _maxpool2d_backward_batch(idx, grad_out)


class Flatten(Layer):
    """(N, C, H, W) -> (N, C*H*W) in row-major order."""

    def __init__(self, name: str = "flatten"):
        self.name = name
        self._shape = None

    def forward(self, x, train=False, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        shape = self._need_cache(self._shape, "input shape")
        return grad_out.reshape(shape)


class Dense(Layer):
    """Affine layer x @ W.T + b over batched row vectors."""

    def __init__(self, name: str, in_features: int, out_features: int,
                 rng: np.random.Generator, dtype=np.float32):
        self.name = name
        self.in_features = in_features
        self.out_features = out_features
        limit = np.sqrt(6.0 / in_features)
        self.weight = rng.uniform(-limit, limit,
                                  (out_features, in_features)).astype(dtype)
        self.bias = np.zeros(out_features, dtype=dtype)
        self._x = None
        self._gw = None
        self._gb = None

    def forward(self, x, train=False, rng=None):
        if x.shape[1] != self.in_features:
            raise ValueError(
                f"{self.name}: input length {x.shape[1]} != weight columns "
                f"{self.in_features}")
        self._x = x
        return x @ self.weight.T + self.bias

    def backward(self, grad_out):
        x = self._need_cache(self._x, "input")
        self._gw = grad_out.T @ x
        self._gb = grad_out.sum(axis=0)
        return grad_out @ self.weight

    def params(self):
        return {f"{self.name}.weight": self.weight, f"{self.name}.bias": self.bias}

    def grads(self):
        return {f"{self.name}.weight": self._gw, f"{self.name}.bias": self._gb}


class ReLU(Layer):
    def __init__(self, name: str):
        self.name = name
        self._x = None

    def forward(self, x, train=False, rng=None):
        self._x = x
        return np.maximum(x, 0)

    def backward(self, grad_out):
        x = self._need_cache(self._x, "input")
        return grad_out * (x > 0)


class Dropout(Layer):
    """Inverted dropout; identity in eval mode."""

    def __init__(self, name: str, p: float):
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout probability must be in [0,1), got {p}")
        self.name = name
        self.p = p
        self._mask = None

    def forward(self, x, train=False, rng=None):
        if not train or self.p == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError(f"{self.name}: train-mode dropout needs a generator")
        keep = rng.random(x.shape) >= self.p
        self._mask = keep.astype(x.dtype) / (1.0 - self.p)
        return x * self._mask

    def backward(self, grad_out):
        if self._mask is None:
            return grad_out
        return grad_out * self._mask


class Network:
    """Ordered layer stack with a designated feature-tap layer.

    ``feature_tap`` is the index of the layer whose output is the network's
    feature vector (the post-activation 1024-wide hidden layer for the
    classification networks).
    """

    def __init__(self, layers: list[Layer], feature_tap: int | None = None):
        self.layers = layers
        self.feature_tap = feature_tap
        self._ran_forward = False

    def forward(self, x: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, train=train, rng=rng)
        self._ran_forward = True
        return x

    def backward(self, grad_out: np.ndarray) -> dict[str, np.ndarray]:
        """Propagate and return gradients for every parameter by name."""
        if not self._ran_forward:
            raise RuntimeError("backward without a recorded forward pass")
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        grads = {}
        for layer in self.layers:
            grads.update(layer.grads())
        return grads

    def features(self, x: np.ndarray) -> np.ndarray:
        """Eval-mode forward up to and including the feature-tap layer."""
        if self.feature_tap is None:
            raise ValueError("network has no feature tap")
        for layer in self.layers[: self.feature_tap + 1]:
            x = layer.forward(x, train=False)
        return x

    def activations(self, x: np.ndarray) -> list[tuple[str, np.ndarray]]:
        """Eval-mode forward collecting every layer's output in order."""
        out = []
        for layer in self.layers:
            x = layer.forward(x, train=False)
            out.append((layer.name, x))
        return out

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for layer in self.layers:
            out.update(layer.params())
        return out

    def set_params(self, values: dict[str, np.ndarray]) -> None:
        """Overwrite parameters in place; names and shapes must match exactly."""
        own = self.params()
        if set(own) != set(values):
            raise ValueError(
                f"parameter name mismatch: have {sorted(own)}, got {sorted(values)}")
        for name, arr in values.items():
            if own[name].shape != arr.shape:
                raise ValueError(
                    f"parameter {name} shape {tuple(arr.shape)} != expected "
                    f"{tuple(own[name].shape)}")
            own[name][...] = arr
