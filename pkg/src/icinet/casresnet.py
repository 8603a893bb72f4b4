# src/icinet/casresnet.py
"""
CasResNet: a small double-residual convolutional refiner of the K×T×2 image.

    a = conv1(x)                          5×5, 2 → 8
    b = conv4(relu(conv3(relu(conv2(a)))))  3×3, 8 → 8 each
    d = conv5(a + b)                      5×5, 8 → 2   (inner shortcut)
    out = d + x                           (outer shortcut)

With every conv parameter at zero the network is the identity map.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.icinet.predn import channels_to_complex, complex_to_channels
from src.nn.layers import Add, Conv2D, ReLU
from src.nn.network import Network


@dataclass(frozen=True)
class CasResNetConfig:
    first_kernel: int = 5
    mid_kernel: int = 3
    last_kernel: int = 5
    filters: int = 8
    mid_layers: int = 3
    channels: int = 2

    def __post_init__(self):
        if self.mid_layers < 1:
            raise ValueError(f"mid_layers must be >= 1, got {self.mid_layers}")

    @property
    def inner_skip(self) -> Tuple[int, int]:
        """(source activation, Add layer position): conv1 output → after the last mid conv."""
        return 1, 1 + 2 * self.mid_layers

    @property
    def outer_skip(self) -> Tuple[int, int]:
        """(source activation, Add layer position): network input → after conv5."""
        return 0, 3 + 2 * self.mid_layers


def build_casresnet(config: CasResNetConfig = CasResNetConfig()) -> Network:
    f, c = config.filters, config.channels
    layers = [Conv2D("conv1", config.first_kernel, config.first_kernel, c, f)]
    for i in range(config.mid_layers):
        if i > 0:
            layers.append(ReLU(f"relu{i}"))
        layers.append(Conv2D(f"conv{i + 2}", config.mid_kernel, config.mid_kernel, f, f))
    layers.append(Add("inner_skip", skip_from=config.inner_skip[0]))
    layers.append(Conv2D(f"conv{config.mid_layers + 2}", config.last_kernel, config.last_kernel, f, c))
    layers.append(Add("outer_skip", skip_from=config.outer_skip[0]))
    return Network(layers, name="casresnet")


def casresnet_refine(H_tilde: np.ndarray, model: Network) -> np.ndarray:
    """H̆ from H̃ for a single (K, T) grid or a batch (N, K, T)."""
    H_tilde = np.asarray(H_tilde)
    single = H_tilde.ndim == 2
    batch = H_tilde[None] if single else H_tilde
    dtype = model.layers[0].weight.data.dtype
    out = channels_to_complex(model.forward(complex_to_channels(batch, dtype=dtype)))
    return out[0] if single else out
