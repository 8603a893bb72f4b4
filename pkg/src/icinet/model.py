# src/icinet/model.py
"""Composition H̆ = F_Cas(F_Pre(Y, X̂, Ĥ; Θ_Pre); Θ_Cas) and its checkpoints."""

from dataclasses import asdict
from typing import Optional, Tuple

import numpy as np

from src.errors import FormatError, ShapeError
from src.icinet.casresnet import CasResNetConfig, build_casresnet, casresnet_refine
from src.icinet.predn import (
    PreDnnConfig,
    assemble_grid_features,
    build_predn,
    channels_to_complex,
    check_predn,
    predn_refine,
)
from src.nn.layers import layer_summary
from src.nn.network import Network, count_macs, count_params, init_params
from src.nn.tensor import ModelParams
from src.nn.weights_io import load_weights, save_weights

PREDN_PREFIX = "predn."
CASRES_PREFIX = "casresnet."


def icinet_forward(
    Y: np.ndarray,
    X_hat: np.ndarray,
    H_hat: np.ndarray,
    predn: Network,
    casresnet: Network,
    predn_config: PreDnnConfig,
) -> np.ndarray:
    return casresnet_refine(predn_refine(Y, X_hat, H_hat, predn, predn_config), casresnet)


def component_seeds(seed: int) -> Tuple[int, int]:
    """(PreDNN, CasResNet) initialization seeds spawned from one base seed."""
    pre, cas = np.random.SeedSequence(seed).spawn(2)
    return int(pre.generate_state(1)[0]), int(cas.generate_state(1)[0])


def create_predn(predn_config: PreDnnConfig, seed: int = 0, dtype=np.float32) -> Network:
    """A PreDNN on its own, initialized as `ICINet.create` would for the same seed."""
    predn = build_predn(predn_config)
    init_params(predn, component_seeds(seed)[0], dtype)
    return predn


class ICINet:
    """
    PreDNN followed by CasResNet. With `predn=None` the model is the
    CasResNet-only baseline, refining the stage-1 estimate directly.
    """

    def __init__(
        self,
        predn: Optional[Network],
        casresnet: Network,
        predn_config: Optional[PreDnnConfig] = None,
        casres_config: CasResNetConfig = CasResNetConfig(),
    ):
        if predn is not None:
            if predn_config is None:
                raise ValueError("predn_config is required when a PreDNN is present")
            check_predn(predn, predn_config)
        self.predn = predn
        self.casresnet = casresnet
        self.predn_config = predn_config
        self.casres_config = casres_config

    @classmethod
    def create(
        cls,
        predn_config: Optional[PreDnnConfig],
        casres_config: CasResNetConfig = CasResNetConfig(),
        seed: int = 0,
        dtype=np.float32,
    ) -> "ICINet":
        predn = None if predn_config is None else create_predn(predn_config, seed, dtype)
        casresnet = build_casresnet(casres_config)
        init_params(casresnet, component_seeds(seed)[1], dtype)
        return cls(predn, casresnet, predn_config, casres_config)

    @property
    def architecture(self) -> str:
        return "casresnet" if self.predn is None else "icinet"

    @property
    def dtype(self):
        return self.casresnet.layers[0].weight.data.dtype

    # ---------- inference ----------

    def refine(self, Y: np.ndarray, X_hat: np.ndarray, H_hat: np.ndarray) -> np.ndarray:
        if self.predn is None:
            return casresnet_refine(H_hat, self.casresnet)
        return icinet_forward(Y, X_hat, H_hat, self.predn, self.casresnet, self.predn_config)

    def features(self, Y: np.ndarray, X_hat: np.ndarray, H_hat: np.ndarray) -> np.ndarray:
        """Network input for a batch: PreDNN features, or the Ĥ image without a PreDNN."""
        if self.predn is None:
            return np.stack([H_hat.real, H_hat.imag], axis=-1).astype(self.dtype)
        return assemble_grid_features(Y, X_hat, H_hat, self.predn_config.n_ici, dtype=self.dtype)

    # ---------- differentiable composition on features ----------

    def forward(self, features: np.ndarray) -> np.ndarray:
        image = features if self.predn is None else self.predn.forward(features)
        return self.casresnet.forward(image)

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        grad = self.casresnet.backward(upstream)
        return grad if self.predn is None else self.predn.backward(grad)

    def parameters(self) -> ModelParams:
        params = self.casresnet.parameters().prefixed(CASRES_PREFIX)
        if self.predn is None:
            return params
        return self.predn.parameters().prefixed(PREDN_PREFIX).merged(params)

    def zero_grad(self) -> None:
        if self.predn is not None:
            self.predn.zero_grad()
        self.casresnet.zero_grad()

    def predict(self, features: np.ndarray) -> np.ndarray:
        return channels_to_complex(self.forward(features))

    def complexity(self, K: int, T: int) -> Tuple[int, int]:
        """(MACs, parameters) for one K×T subframe."""
        macs = count_macs(self.casresnet, (K, T, self.casres_config.channels))
        params = count_params(self.casresnet)
        if self.predn is not None:
            macs += count_macs(self.predn, (K, T, self.predn_config.input_width))
            params += count_params(self.predn)
        return macs, params

    # ---------- persistence ----------

    def descriptor(self) -> dict:
        networks = {"casresnet": [layer_summary(layer) for layer in self.casresnet.layers]}
        if self.predn is not None:
            networks["predn"] = [layer_summary(layer) for layer in self.predn.layers]
        return {
            "architecture": self.architecture,
            "predn": asdict(self.predn_config) if self.predn_config is not None else None,
            "casresnet": asdict(self.casres_config),
            "layers": networks,
        }


def save_icinet(path: str, model: ICINet) -> None:
    save_weights(path, model.parameters().snapshot(), model.descriptor())
    print(f"💾 Saved {model.architecture} checkpoint to {path}")


def load_icinet(path: str, expected: Optional[ICINet] = None) -> ICINet:
    """Rebuild a model from an ICIW checkpoint, optionally requiring it to match `expected`."""
    tensors, descriptor = load_weights(path)
    if descriptor.get("architecture") not in ("icinet", "casresnet"):
        raise FormatError(f"{path}: not an ICINet checkpoint (descriptor {descriptor})")
    predn_config = PreDnnConfig(**descriptor["predn"]) if descriptor.get("predn") else None
    casres_config = CasResNetConfig(**descriptor["casresnet"])
    if expected is not None and descriptor != expected.descriptor():
        raise ShapeError(
            f"{path}: checkpoint architecture {descriptor['architecture']} "
            f"(N_ICI={predn_config.n_ici if predn_config else None}) does not match the requested model"
        )

    model = ICINet(
        build_predn(predn_config) if predn_config is not None else None,
        build_casresnet(casres_config),
        predn_config,
        casres_config,
    )
    model.parameters().load(tensors)
    return model
