# src/icinet/training.py
"""
Training strategies for ICINet.

  sequential   phase 1 fits the PreDNN to H̄ (H̃ vs H̄), phase 2 freezes it and fits
               CasResNet on the precomputed H̃ (H̆ vs H̄)
  end-to-end   one objective (H̆ vs H̄) through the whole composition
  casres-only  CasResNet refining the stage-1 estimate directly

All strategies share one mini-batch Adam loop. Traces report the mean squared
error per grid entry, i.e. the batch loss divided by K·T.
"""

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from src.channel.ofdm_channel import PilotPattern
from src.errors import NumericalError, ShapeError
from src.estimation.estimators import stage_one
from src.icinet.casresnet import CasResNetConfig
from src.icinet.model import ICINet
from src.icinet.predn import (
    PreDnnConfig,
    assemble_grid_features,
    channels_to_complex,
    check_predn,
    complex_to_channels,
)
from src.io_utils import atomic_write_text
from src.nn.network import Network
from src.nn.optim import AdamState, adam_step, mse_loss

PHASE_TAGS = {"predn": 11, "casresnet": 12, "e2e": 13, "casres_only": 14}


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 100
    batch_size: int = 200
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")

    @classmethod
    def full(cls, seed: int = 0) -> "TrainingConfig":
        return cls(epochs=100, batch_size=200, learning_rate=1e-3, seed=seed)

    @classmethod
    def desk(cls, seed: int = 0) -> "TrainingConfig":
        return cls(epochs=20, batch_size=200, learning_rate=1e-3, seed=seed)

    def updates_per_epoch(self, num_samples: int) -> int:
        return math.ceil(num_samples / self.batch_size)


@dataclass(eq=False)
class TrainingSet:
    """Stage-1 outputs paired with the ground truth, all (N, K, T) complex."""

    Y: np.ndarray
    X_hat: np.ndarray
    H_hat: np.ndarray
    H_true: np.ndarray

    def __post_init__(self):
        shapes = {a.shape for a in (self.Y, self.X_hat, self.H_hat, self.H_true)}
        if len(shapes) != 1 or self.Y.ndim != 3:
            raise ShapeError(f"training arrays must share one (N, K, T) shape, got {sorted(shapes)}")
        if self.Y.shape[0] == 0:
            raise ValueError("training set is empty")

    @classmethod
    def build(cls, Y: np.ndarray, H_true: np.ndarray, pattern: PilotPattern) -> "TrainingSet":
        estimate, decisions = stage_one(Y, pattern)
        return cls(Y=np.asarray(Y), X_hat=decisions.X_hat, H_hat=estimate.H_hat, H_true=np.asarray(H_true))

    def __len__(self) -> int:
        return self.Y.shape[0]

    @property
    def grid_size(self) -> int:
        return self.Y.shape[1] * self.Y.shape[2]


@dataclass
class LossTrace:
    phase: str
    initial_validation: float = float("nan")
    train: List[float] = field(default_factory=list)
    validation: List[float] = field(default_factory=list)
    updates_per_epoch: int = 0

    @property
    def final_validation(self) -> float:
        return self.validation[-1] if self.validation else self.initial_validation


@dataclass(eq=False)
class TrainingResult:
    model: ICINet
    strategy: str
    traces: Dict[str, LossTrace]

    def traces_json(self) -> str:
        payload = {"strategy": self.strategy, "traces": {name: asdict(t) for name, t in self.traces.items()}}
        return json.dumps(payload, indent=2, sort_keys=True)

    def save_traces(self, path: str) -> None:
        atomic_write_text(path, self.traces_json())


# ---------- shared loop ----------

def _predict(trainable, inputs: Callable[[np.ndarray], np.ndarray], count: int, chunk: int) -> np.ndarray:
    outputs = [trainable.forward(inputs(np.arange(start, min(start + chunk, count))))
               for start in range(0, count, chunk)]
    return np.concatenate(outputs, axis=0)


def _mean_entry_mse(trainable, inputs, targets: np.ndarray, chunk: int) -> float:
    total = 0.0
    for start in range(0, len(targets), chunk):
        idx = np.arange(start, min(start + chunk, len(targets)))
        loss, _ = mse_loss(trainable.forward(inputs(idx)), targets[idx])
        total += loss * idx.size
    return total / (len(targets) * targets.shape[1] * targets.shape[2])


def _fit(
    trainable,
    phase: str,
    train_inputs: Callable[[np.ndarray], np.ndarray],
    train_targets: np.ndarray,
    val_inputs: Callable[[np.ndarray], np.ndarray],
    val_targets: np.ndarray,
    config: TrainingConfig,
    verbose: bool,
) -> LossTrace:
    """Mini-batch Adam on the batch-mean squared Frobenius loss."""
    N = len(train_targets)
    grid = train_targets.shape[1] * train_targets.shape[2]
    params = trainable.parameters()
    state = AdamState.for_params(params, lr=config.learning_rate)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, PHASE_TAGS[phase]]))

    trace = LossTrace(phase=phase, updates_per_epoch=config.updates_per_epoch(N))
    trace.initial_validation = _mean_entry_mse(trainable, val_inputs, val_targets, config.batch_size)
    if verbose:
        print(f"🔁 [{phase}] {N} samples, {trace.updates_per_epoch} updates/epoch, "
              f"initial val MSE {trace.initial_validation:.4e}")

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(N)
        running = 0.0
        for batch, start in enumerate(range(0, N, config.batch_size), start=1):
            idx = np.sort(order[start:start + config.batch_size])
            trainable.zero_grad()
            loss, upstream = mse_loss(trainable.forward(train_inputs(idx)), train_targets[idx])
            if not math.isfinite(loss):
                raise NumericalError(f"[{phase}] non-finite loss {loss} at epoch {epoch}, batch {batch}")
            trainable.backward(upstream)
            try:
                adam_step(params, params.gradients(), state)
            except NumericalError as e:
                raise NumericalError(f"[{phase}] epoch {epoch}, batch {batch}: {e}") from e
            running += loss * idx.size

        trace.train.append(running / (N * grid))
        trace.validation.append(_mean_entry_mse(trainable, val_inputs, val_targets, config.batch_size))
        if verbose:
            print(f"   epoch {epoch:3d}/{config.epochs}  train {trace.train[-1]:.4e}  val {trace.validation[-1]:.4e}")
    return trace


# ---------- strategies ----------

def train_predn(
    model: ICINet,
    train_set: TrainingSet,
    val_set: TrainingSet,
    config: TrainingConfig,
    verbose: bool = True,
) -> LossTrace:
    """Phase 1 alone: fit the PreDNN of `model` in place."""
    if model.predn is None:
        raise ValueError("model has no PreDNN to train")
    return fit_predn(model.predn, model.predn_config, train_set, val_set, config, verbose)


def fit_predn(
    predn: Network,
    predn_config: PreDnnConfig,
    train_set: TrainingSet,
    val_set: TrainingSet,
    config: TrainingConfig,
    verbose: bool = True,
) -> LossTrace:
    """Fit a standalone PreDNN network to H̄ in place."""
    check_predn(predn, predn_config)
    n_ici = predn_config.n_ici
    dtype = predn.layers[0].weight.data.dtype

    def features(data: TrainingSet):
        return lambda idx: assemble_grid_features(
            data.Y[idx], data.X_hat[idx], data.H_hat[idx], n_ici, dtype=dtype
        )

    return _fit(
        predn, "predn",
        features(train_set), complex_to_channels(train_set.H_true, dtype),
        features(val_set), complex_to_channels(val_set.H_true, dtype),
        config, verbose,
    )


def refine_with_predn(model: ICINet, data: TrainingSet, chunk: int = 200) -> np.ndarray:
    """H̃ for every sample of `data` using the (frozen) PreDNN."""
    n_ici = model.predn_config.n_ici
    dtype = model.dtype
    channels = _predict(
        model.predn,
        lambda idx: assemble_grid_features(data.Y[idx], data.X_hat[idx], data.H_hat[idx], n_ici, dtype=dtype),
        len(data), chunk,
    )
    return channels_to_complex(channels)


def _fit_casresnet(model: ICINet, phase: str, train_image, train_set, val_image, val_set, config, verbose):
    dtype = model.dtype
    train_in = complex_to_channels(train_image, dtype)
    val_in = complex_to_channels(val_image, dtype)
    return _fit(
        model.casresnet, phase,
        lambda idx: train_in[idx], complex_to_channels(train_set.H_true, dtype),
        lambda idx: val_in[idx], complex_to_channels(val_set.H_true, dtype),
        config, verbose,
    )


def train_sequential(
    train_set: TrainingSet,
    val_set: TrainingSet,
    config: TrainingConfig,
    predn_config: PreDnnConfig = PreDnnConfig(),
    casres_config: CasResNetConfig = CasResNetConfig(),
    verbose: bool = True,
) -> TrainingResult:
    model = ICINet.create(predn_config, casres_config, seed=config.seed)
    if verbose:
        print(f"🧠 Sequential training of ICINet (N_ICI={predn_config.n_ici})")
    predn_trace = train_predn(model, train_set, val_set, config, verbose)

    # Θ_Pre is frozen from here on, so H̃ is computed once per dataset
    train_tilde = refine_with_predn(model, train_set, config.batch_size)
    val_tilde = refine_with_predn(model, val_set, config.batch_size)
    cas_trace = _fit_casresnet(model, "casresnet", train_tilde, train_set, val_tilde, val_set, config, verbose)
    if verbose:
        print(f"✅ Sequential training done: val MSE {predn_trace.final_validation:.4e} → {cas_trace.final_validation:.4e}")
    return TrainingResult(model=model, strategy="sequential", traces={"predn": predn_trace, "casresnet": cas_trace})


def train_end_to_end(
    train_set: TrainingSet,
    val_set: TrainingSet,
    config: TrainingConfig,
    predn_config: PreDnnConfig = PreDnnConfig(),
    casres_config: CasResNetConfig = CasResNetConfig(),
    verbose: bool = True,
    model: Optional[ICINet] = None,
) -> TrainingResult:
    """Joint fit of Θ_Pre and Θ_Cas on the final-output loss."""
    model = model if model is not None else ICINet.create(predn_config, casres_config, seed=config.seed)
    if model.predn is None:
        raise ValueError("end-to-end training needs a model with a PreDNN")
    if verbose:
        print(f"🧠 End-to-end training of ICINet (N_ICI={model.predn_config.n_ici})")
    dtype = model.dtype
    trace = _fit(
        model, "e2e",
        lambda idx: model.features(train_set.Y[idx], train_set.X_hat[idx], train_set.H_hat[idx]),
        complex_to_channels(train_set.H_true, dtype),
        lambda idx: model.features(val_set.Y[idx], val_set.X_hat[idx], val_set.H_hat[idx]),
        complex_to_channels(val_set.H_true, dtype),
        config, verbose,
    )
    if verbose:
        print(f"✅ End-to-end training done: val MSE {trace.final_validation:.4e}")
    return TrainingResult(model=model, strategy="e2e", traces={"e2e": trace})


def train_casresnet_only(
    train_set: TrainingSet,
    val_set: TrainingSet,
    config: TrainingConfig,
    casres_config: CasResNetConfig = CasResNetConfig(),
    verbose: bool = True,
) -> TrainingResult:
    model = ICINet.create(None, casres_config, seed=config.seed)
    if verbose:
        print("🧠 Training CasResNet on the stage-1 estimate")
    trace = _fit_casresnet(model, "casres_only", train_set.H_hat, train_set, val_set.H_hat, val_set, config, verbose)
    return TrainingResult(model=model, strategy="casres_only", traces={"casres_only": trace})
