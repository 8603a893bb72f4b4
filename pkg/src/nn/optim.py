# src/nn/optim.py
from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import numpy as np

from src.errors import NumericalError, ShapeError
from src.nn.tensor import ModelParams


def mse_loss(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """Batch mean of per-sample squared Frobenius distances, and its gradient."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: prediction shape {pred.shape} != target shape {target.shape}")
    if pred.ndim == 0 or pred.shape[0] == 0:
        raise ShapeError(f"mse_loss: need a leading batch axis with samples, got shape {pred.shape}")
    batch = pred.shape[0]
    diff = pred - target
    loss = float(np.sum(np.square(diff, dtype=np.float64)) / batch)
    return loss, (2.0 / batch) * diff


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ModelParams, **hyper) -> "AdamState":
        state = cls(**hyper)
        for name, tensor in params.items():
            state.first_moment[name] = np.zeros_like(tensor.data)
            state.second_moment[name] = np.zeros_like(tensor.data)
        return state


def adam_step(
    params: ModelParams,
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> Tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update, applied in place to `params`."""
    for name, tensor in params.items():
        if name not in grads or name not in state.first_moment:
            raise ShapeError(f"adam_step: no gradient/moment slot for parameter '{name}'")
        if grads[name].shape != tensor.shape or state.first_moment[name].shape != tensor.shape:
            raise ShapeError(f"adam_step: shape mismatch for parameter '{name}' {tensor.shape}")
        bad = np.size(grads[name]) - np.count_nonzero(np.isfinite(grads[name]))
        if bad:
            raise NumericalError(
                f"adam_step: {bad} non-finite gradient entries in '{name}' at step {state.step_count + 1}"
            )

    step = state.step_count + 1
    correction1 = 1.0 - state.beta1 ** step
    correction2 = 1.0 - state.beta2 ** step
    for name, tensor in params.items():
        grad = grads[name]
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(grad)
        update = state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.epsilon)
        tensor.data -= update.astype(tensor.data.dtype, copy=False)
    state.step_count = step
    return params, state
