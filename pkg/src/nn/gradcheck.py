# src/nn/gradcheck.py
"""Central finite-difference checks of analytic gradients (use float64 models)."""

from typing import Callable, Dict

import numpy as np

from src.nn.optim import mse_loss

RELATIVE_FLOOR = 1e-4


def numerical_gradient(loss_fn: Callable[[], float], array: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """d loss / d array by central differences, perturbing `array` in place."""
    if not array.flags.c_contiguous:
        raise ValueError("numerical_gradient needs a C-contiguous array to perturb in place")
    grad = np.zeros_like(array, dtype=np.float64)
    flat = array.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        plus = loss_fn()
        flat[i] = original - step
        minus = loss_fn()
        flat[i] = original
        out[i] = (plus - minus) / (2 * step)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), RELATIVE_FLOOR)
    return float(np.max(np.abs(analytic - numeric) / scale)) if analytic.size else 0.0


def gradient_check(network, x: np.ndarray, target: np.ndarray, step: float = 1e-5) -> Dict[str, float]:
    """Max relative error per parameter (and 'input') of the MSE loss gradient.

    `network` needs forward, backward, parameters and zero_grad, so composed
    models can be checked as well as plain Networks.
    """
    def loss() -> float:
        return mse_loss(network.forward(x), target)[0]

    network.zero_grad()
    _, upstream = mse_loss(network.forward(x), target)
    input_grad = network.backward(upstream)

    errors = {}
    for name, tensor in network.parameters().items():
        analytic = tensor.grad.copy()
        errors[name] = max_relative_error(analytic, numerical_gradient(loss, tensor.data, step))
    errors["input"] = max_relative_error(input_grad, numerical_gradient(loss, x, step))
    return errors
