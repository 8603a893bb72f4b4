# src/nn/layers.py
"""
Layer kinds of the engine. Activations are channels-last: Dense acts on the
last axis of any (..., in) array, Conv2D on (batch, H, W, C) arrays.

Each layer caches what its backward pass needs during forward, and backward
accumulates parameter gradients into `Tensor.grad`.
"""

from typing import Dict, Tuple

import numpy as np

from src.errors import ModelStateError, ShapeError
from src.nn.tensor import Tensor


class Layer:
    kind = "layer"

    def __init__(self, name: str):
        self.name = name
        self._cache = None

    def params(self) -> Dict[str, Tensor]:
        return {}

    def param_count(self) -> int:
        return 0

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, input_shape: Tuple[int, ...]) -> Tuple[int, ...]:
        return tuple(input_shape)

    def macs(self, input_shape: Tuple[int, ...]) -> int:
        return 0

    def initialize(self, rng: np.random.Generator, dtype) -> None:
        pass

    def _cached(self):
        if self._cache is None:
            raise ModelStateError(f"layer '{self.name}' ({self.kind}): backward called before forward")
        return self._cache

    def _shape_error(self, expected: str, got: Tuple[int, ...]) -> ShapeError:
        return ShapeError(f"layer '{self.name}' ({self.kind}) expected {expected}, got shape {tuple(got)}")

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name!r})"


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Dense(Layer):
    kind = "Dense"

    def __init__(self, name: str, in_features: int, out_features: int):
        super().__init__(name)
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Tensor.zeros((in_features, out_features))
        self.bias = Tensor.zeros((out_features,))

    def params(self) -> Dict[str, Tensor]:
        return {f"{self.name}.weight": self.weight, f"{self.name}.bias": self.bias}

    def param_count(self) -> int:
        return self.in_features * self.out_features + self.out_features

    def initialize(self, rng, dtype) -> None:
        self.weight.data = glorot_uniform(rng, self.weight.shape, self.in_features, self.out_features, dtype)
        self.bias.data = np.zeros(self.bias.shape, dtype=dtype)
        self.weight.grad = self.bias.grad = None

    def _check(self, shape) -> None:
        if len(shape) < 1 or shape[-1] != self.in_features:
            raise self._shape_error(f"(..., {self.in_features})", shape)

    def forward(self, x):
        self._check(x.shape)
        self._cache = x
        return x @ self.weight.data + self.bias.data

    def backward(self, grad):
        x = self._cached()
        flat_x = x.reshape(-1, self.in_features)
        flat_g = grad.reshape(-1, self.out_features)
        _accumulate(self.weight, flat_x.T @ flat_g)
        _accumulate(self.bias, flat_g.sum(axis=0))
        return grad @ self.weight.data.T

    def output_shape(self, input_shape):
        self._check(input_shape)
        return tuple(input_shape[:-1]) + (self.out_features,)

    def macs(self, input_shape):
        self._check(input_shape)
        return int(np.prod(input_shape[:-1], dtype=np.int64)) * self.in_features * self.out_features


class Conv2D(Layer):
    """Stride-1 convolution with zero 'same' padding; kernels must be odd."""

    kind = "Conv2D"

    def __init__(self, name: str, kh: int, kw: int, cin: int, cout: int):
        super().__init__(name)
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError(f"layer '{name}': same padding needs odd kernel sizes, got {kh}x{kw}")
        self.kh, self.kw, self.cin, self.cout = kh, kw, cin, cout
        self.weight = Tensor.zeros((kh, kw, cin, cout))
        self.bias = Tensor.zeros((cout,))

    def params(self) -> Dict[str, Tensor]:
        return {f"{self.name}.weight": self.weight, f"{self.name}.bias": self.bias}

    def param_count(self) -> int:
        return self.kh * self.kw * self.cin * self.cout + self.cout

    def initialize(self, rng, dtype) -> None:
        fan_in = self.kh * self.kw * self.cin
        fan_out = self.kh * self.kw * self.cout
        self.weight.data = glorot_uniform(rng, self.weight.shape, fan_in, fan_out, dtype)
        self.bias.data = np.zeros(self.bias.shape, dtype=dtype)
        self.weight.grad = self.bias.grad = None

    def _check(self, shape, batched: bool) -> None:
        rank = 4 if batched else 3
        if len(shape) != rank or shape[-1] != self.cin:
            prefix = "(batch, H, W" if batched else "(H, W"
            raise self._shape_error(f"{prefix}, {self.cin})", shape)

    def forward(self, x):
        self._check(x.shape, batched=True)
        _, H, W, _ = x.shape
        ph, pw = self.kh // 2, self.kw // 2
        padded = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
        out = np.zeros(x.shape[:3] + (self.cout,), dtype=np.result_type(x, self.weight.data))
        for a in range(self.kh):
            for b in range(self.kw):
                out += padded[:, a:a + H, b:b + W, :] @ self.weight.data[a, b]
        out += self.bias.data
        self._cache = padded
        return out

    def backward(self, grad):
        padded = self._cached()
        _, H, W, _ = grad.shape
        ph, pw = self.kh // 2, self.kw // 2
        d_weight = np.empty_like(self.weight.data)
        d_padded = np.zeros_like(padded)
        for a in range(self.kh):
            for b in range(self.kw):
                window = padded[:, a:a + H, b:b + W, :]
                d_weight[a, b] = np.tensordot(window, grad, axes=([0, 1, 2], [0, 1, 2]))
                d_padded[:, a:a + H, b:b + W, :] += grad @ self.weight.data[a, b].T
        _accumulate(self.weight, d_weight)
        _accumulate(self.bias, grad.sum(axis=(0, 1, 2)))
        return d_padded[:, ph:ph + H, pw:pw + W, :]

    def output_shape(self, input_shape):
        self._check(input_shape, batched=False)
        return tuple(input_shape[:2]) + (self.cout,)

    def macs(self, input_shape):
        self._check(input_shape, batched=False)
        H, W, _ = input_shape
        return H * W * self.kh * self.kw * self.cin * self.cout


class ReLU(Layer):
    kind = "ReLU"

    def forward(self, x):
        mask = x > 0
        self._cache = mask
        return x * mask

    def backward(self, grad):
        return grad * self._cached()


class Add(Layer):
    """Residual addition of the running activation and an earlier one.

    `skip_from` indexes the network's activation list: 0 is the network input,
    i is the output of the i-th layer (1-based).
    """

    kind = "Add"

    def __init__(self, name: str, skip_from: int):
        super().__init__(name)
        self.skip_from = skip_from

    def combine(self, x: np.ndarray, skip: np.ndarray) -> np.ndarray:
        if x.shape != skip.shape:
            raise ShapeError(
                f"layer '{self.name}' (Add) cannot add shapes {tuple(x.shape)} and {tuple(skip.shape)}"
            )
        self._cache = True
        return x + skip

    def forward(self, x):
        raise ModelStateError(f"layer '{self.name}' (Add) must be run inside a Network")

    def backward(self, grad):
        self._cached()
        return grad


def _accumulate(tensor: Tensor, value: np.ndarray) -> None:
    value = value.astype(tensor.data.dtype, copy=False)
    if tensor.grad is None:
        tensor.grad = value.copy()
    else:
        tensor.grad += value


def layer_summary(layer: Layer) -> dict:
    """Plain-dict description of a layer for checkpoint descriptors."""
    if isinstance(layer, Dense):
        return {"name": layer.name, "kind": layer.kind, "in": layer.in_features, "out": layer.out_features}
    if isinstance(layer, Conv2D):
        return {"name": layer.name, "kind": layer.kind, "kernel": [layer.kh, layer.kw], "in": layer.cin, "out": layer.cout}
    if isinstance(layer, Add):
        return {"name": layer.name, "kind": layer.kind, "skip_from": layer.skip_from}
    return {"name": layer.name, "kind": layer.kind}
