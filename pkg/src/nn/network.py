# src/nn/network.py
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.errors import ModelStateError, ShapeError
from src.nn.layers import Add, Layer
from src.nn.tensor import ModelParams


class Network:
    """An ordered layer list with residual Add layers wired to earlier activations."""

    def __init__(self, layers: Sequence[Layer], name: str = "network"):
        self.layers: List[Layer] = list(layers)
        self.name = name
        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names):
            raise ValueError(f"{name}: layer names must be unique, got {names}")
        for position, layer in enumerate(self.layers, start=1):
            if isinstance(layer, Add) and not 0 <= layer.skip_from < position:
                raise ValueError(
                    f"{name}: layer '{layer.name}' skips from activation {layer.skip_from}, "
                    f"which is not earlier than its own position {position}"
                )
        self._activations: Optional[List[np.ndarray]] = None

    def parameters(self) -> ModelParams:
        tensors = []
        for layer in self.layers:
            tensors.extend(layer.params().items())
        return ModelParams(tensors)

    def zero_grad(self) -> None:
        for tensor in self.parameters().tensors.values():
            tensor.zero_grad()

    def forward(self, x: np.ndarray) -> np.ndarray:
        activations = [x]
        for layer in self.layers:
            if isinstance(layer, Add):
                out = layer.combine(activations[-1], activations[layer.skip_from])
            else:
                out = layer.forward(activations[-1])
            activations.append(out)
        self._activations = activations
        return activations[-1]

    __call__ = forward

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients and return the gradient w.r.t. the input."""
        if self._activations is None:
            raise ModelStateError(f"{self.name}: backward called before forward")
        output = self._activations[-1]
        if upstream.shape != output.shape:
            raise ShapeError(f"{self.name}: upstream gradient shape {upstream.shape} != output shape {output.shape}")

        grads: List[Optional[np.ndarray]] = [None] * (len(self.layers) + 1)
        grads[-1] = upstream
        for position in range(len(self.layers), 0, -1):
            layer = self.layers[position - 1]
            grad = grads[position]
            if grad is None:
                continue
            _route(grads, position - 1, layer.backward(grad))
            if isinstance(layer, Add):
                _route(grads, layer.skip_from, grad)
        return grads[0]


def _route(grads: List[Optional[np.ndarray]], index: int, value: np.ndarray) -> None:
    grads[index] = value if grads[index] is None else grads[index] + value


def forward(model: Network, x: np.ndarray) -> np.ndarray:
    return model.forward(x)


def backward(model: Network, upstream: np.ndarray) -> np.ndarray:
    return model.backward(upstream)


def init_params(model: Network, seed: int, dtype=np.float32) -> ModelParams:
    """Glorot-uniform weights, zero biases, drawn in layer order from one stream."""
    rng = np.random.default_rng(seed)
    for layer in model.layers:
        layer.initialize(rng, dtype)
    return model.parameters()


def count_params(model: Network) -> int:
    return sum(layer.param_count() for layer in model.layers)


def count_macs(model: Network, input_shape: Tuple[int, ...]) -> int:
    """Multiply-accumulates for one sample; `input_shape` excludes the batch axis."""
    shapes = [tuple(input_shape)]
    total = 0
    for layer in model.layers:
        if isinstance(layer, Add):
            if shapes[layer.skip_from] != shapes[-1]:
                raise ShapeError(
                    f"layer '{layer.name}' (Add) cannot add shapes {shapes[-1]} and {shapes[layer.skip_from]}"
                )
            shapes.append(shapes[-1])
            continue
        total += layer.macs(shapes[-1])
        shapes.append(layer.output_shape(shapes[-1]))
    return total
