# src/icinet/predn.py
"""
PreDNN: a per-position fully connected refinement shared by the whole grid.

The input at (k, t) gathers the received signals and hard decisions of the
2·N_ICI+1 cyclically adjacent subcarriers plus the stage-1 estimate at k:

    [Y_{k-N..k+N,t}, X̂_{k-N..k+N,t}, Ĥ_{k,t}]

with every complex value expanded in place as (re, im).
"""

from dataclasses import dataclass

import numpy as np

from src.errors import ShapeError
from src.nn.layers import Dense, ReLU
from src.nn.network import Network


@dataclass(frozen=True)
class PreDnnConfig:
    n_ici: int = 2
    hidden_units: int = 32

    def __post_init__(self):
        if self.n_ici < 0:
            raise ValueError(f"n_ici must be >= 0, got {self.n_ici}")
        if self.hidden_units < 1:
            raise ValueError(f"hidden_units must be >= 1, got {self.hidden_units}")

    @property
    def input_width(self) -> int:
        return 8 * self.n_ici + 6


def _interleave(values: np.ndarray) -> np.ndarray:
    """Complex (..., n) → real (..., 2n) as re0, im0, re1, im1, ..."""
    return np.stack([values.real, values.imag], axis=-1).reshape(values.shape[:-1] + (2 * values.shape[-1],))


def assemble_predn_input(
    Y: np.ndarray, X_hat: np.ndarray, H_hat: np.ndarray, k: int, t: int, n_ici: int, K: int
) -> np.ndarray:
    """The PreDNN input vector of one grid position (0-based k, t)."""
    if not 0 <= k < K:
        raise IndexError(f"subcarrier {k} outside 0..{K - 1}")
    neighbours = (k + np.arange(-n_ici, n_ici + 1)) % K
    values = np.concatenate([Y[neighbours, t], X_hat[neighbours, t], [H_hat[k, t]]])
    return _interleave(values)


def assemble_grid_features(
    Y: np.ndarray, X_hat: np.ndarray, H_hat: np.ndarray, n_ici: int, dtype=np.float32
) -> np.ndarray:
    """PreDNN inputs for every position of (..., K, T) grids → (..., K, T, 8·N_ICI+6)."""
    offsets = range(-n_ici, n_ici + 1)
    # np.roll by -o puts subcarrier k+o (mod K) at index k
    columns = [np.roll(Y, -o, axis=-2) for o in offsets]
    columns += [np.roll(X_hat, -o, axis=-2) for o in offsets]
    columns.append(H_hat)
    return _interleave(np.stack(columns, axis=-1)).astype(dtype, copy=False)


def build_predn(config: PreDnnConfig) -> Network:
    return Network(
        [
            Dense("dense1", config.input_width, config.hidden_units),
            ReLU("relu1"),
            Dense("dense2", config.hidden_units, 2),
        ],
        name="predn",
    )


def check_predn(model: Network, config: PreDnnConfig) -> None:
    first, last = model.layers[0], model.layers[-1]
    if not isinstance(first, Dense) or first.in_features != config.input_width:
        raise ShapeError(f"PreDNN input layer does not take {config.input_width} features (N_ICI={config.n_ici})")
    if not isinstance(last, Dense) or last.out_features != 2:
        raise ShapeError("PreDNN output layer must produce (re, im)")


def channels_to_complex(channels: np.ndarray) -> np.ndarray:
    return channels[..., 0] + 1j * channels[..., 1]


def complex_to_channels(grid: np.ndarray, dtype=np.float32) -> np.ndarray:
    return np.stack([grid.real, grid.imag], axis=-1).astype(dtype, copy=False)


def predn_refine(
    Y: np.ndarray, X_hat: np.ndarray, H_hat: np.ndarray, model: Network, config: PreDnnConfig
) -> np.ndarray:
    """H̃ over the full (..., K, T) grid with weights shared across positions."""
    check_predn(model, config)
    dtype = model.layers[0].weight.data.dtype
    features = assemble_grid_features(Y, X_hat, H_hat, config.n_ici, dtype=dtype)
    return channels_to_complex(model.forward(features))
