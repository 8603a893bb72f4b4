# src/harness/evaluation.py
"""
MSE-vs-SNR evaluation, the N_ICI sweep, the complexity table and the full
experiment run.

An estimator is any callable taking a SubframeDataset slice and returning
its final channel estimates as an (N, K, T) complex array.
"""

import copy
import csv
import io
import json
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.channel.config import SystemConfig
from src.estimation.estimators import ls_at_pilots, stage_one
from src.estimation.lmmse import ChannelStatistics, estimate_channel_stats, lmmse_estimate
from src.harness.config import ExperimentConfig
from src.harness.dataset_store import SubframeDataset, generate_dataset
from src.icinet.casresnet import CasResNetConfig
from src.icinet.model import ICINet, create_predn, load_icinet, save_icinet
from src.icinet.predn import PreDnnConfig, channels_to_complex
from src.icinet.training import (
    TrainingResult,
    TrainingSet,
    fit_predn,
    train_casresnet_only,
    train_end_to_end,
    train_sequential,
)
from src.io_utils import atomic_write_text
from src.settings import worker_count

Estimator = Callable[[SubframeDataset], np.ndarray]

ESTIMATOR_COLUMNS = ("ls", "predn", "casres", "icinet_seq", "icinet_e2e", "lmmse")
MODEL_CHUNK = 200


# ---------------------------------------
# 1. Reports
# ---------------------------------------
@dataclass
class EvalReport:
    snr_db: List[float]
    columns: Dict[str, List[float]]
    metadata: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        for name, values in self.columns.items():
            if len(values) != len(self.snr_db):
                raise ValueError(f"column '{name}' has {len(values)} rows for {len(self.snr_db)} SNR points")
        order = np.argsort(self.snr_db, kind="stable")
        self.snr_db = [float(self.snr_db[i]) for i in order]
        self.columns = {name: [float(values[i]) for i in order] for name, values in self.columns.items()}
        for name, values in self.columns.items():
            if not all(np.isfinite(v) and v >= 0 for v in values):
                raise ValueError(f"column '{name}' holds negative or non-finite MSE values: {values}")

    def column(self, name: str) -> List[float]:
        return self.columns[name]

    def mse(self, name: str, snr_db: float) -> float:
        return self.columns[name][self.snr_db.index(float(snr_db))]

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["snr_db"] + [f"mse_{name}" for name in self.columns])
        for row, snr in enumerate(self.snr_db):
            writer.writerow([f"{snr:g}"] + [f"{self.columns[name][row]:.10e}" for name in self.columns])
        return buffer.getvalue()

    def to_json(self) -> str:
        rows = [
            {"snr_db": snr, **{f"mse_{name}": self.columns[name][row] for name in self.columns}}
            for row, snr in enumerate(self.snr_db)
        ]
        return json.dumps({"rows": rows, "metadata": self.metadata}, indent=2, sort_keys=True)

    def write(self, path: str, fmt: str = "csv") -> None:
        if fmt not in ("csv", "json"):
            raise ValueError(f"unknown report format {fmt!r}")
        atomic_write_text(path, self.to_csv() if fmt == "csv" else self.to_json())


def grid_mse(estimate: np.ndarray, truth: np.ndarray) -> float:
    """Mean over subframes and grid positions of |Ĥ − H̄|²."""
    estimate = np.asarray(estimate)
    truth = np.asarray(truth)
    if estimate.shape != truth.shape:
        raise ValueError(f"estimate shape {estimate.shape} != ground truth shape {truth.shape}")
    diff = estimate.astype(np.complex128) - truth.astype(np.complex128)
    return float(np.mean(np.abs(diff) ** 2))


def evaluate_estimators(
    estimators: Mapping[str, Estimator],
    test_dataset: SubframeDataset,
    snr_grid: Optional[Sequence[float]] = None,
    workers: Optional[int] = None,
    metadata: Optional[dict] = None,
    verbose: bool = True,
) -> EvalReport:
    """One report column per estimator, SNR points evaluated on worker threads."""
    snr_grid = list(snr_grid) if snr_grid is not None else list(test_dataset.snr_values())
    if not snr_grid:
        raise ValueError("snr_grid must not be empty")
    available = set(test_dataset.snr_db.tolist())
    missing = [s for s in snr_grid if float(np.float32(s)) not in available]
    if missing:
        raise ValueError(f"test dataset has no subframes at SNR {missing} dB (has {test_dataset.snr_values()})")

    def evaluate_point(snr: float) -> Dict[str, float]:
        subset = test_dataset.at_snr(snr)
        row = {name: grid_mse(estimator(subset), subset.H) for name, estimator in estimators.items()}
        if verbose:
            summary = "  ".join(f"{name}={value:.3e}" for name, value in row.items())
            print(f"   {snr:5.1f} dB  {summary}")
        return row

    if verbose:
        print(f"🔁 Evaluating {len(estimators)} estimator(s) at {len(snr_grid)} SNR point(s)...")
    with ThreadPoolExecutor(max_workers=workers or worker_count()) as pool:
        rows = list(pool.map(evaluate_point, snr_grid))

    columns = {name: [row[name] for row in rows] for name in estimators}
    return EvalReport(snr_db=list(snr_grid), columns=columns, metadata=dict(metadata or {}))


def evaluate_mse(
    estimator: Estimator,
    test_dataset: SubframeDataset,
    snr_grid: Optional[Sequence[float]] = None,
    name: str = "estimator",
    workers: Optional[int] = None,
) -> EvalReport:
    return evaluate_estimators({name: estimator}, test_dataset, snr_grid, workers=workers, verbose=False)


# ---------------------------------------
# 2. Estimators
# ---------------------------------------
def oracle_estimator() -> Estimator:
    return lambda data: data.H


def zero_estimator() -> Estimator:
    return lambda data: np.zeros_like(data.H)


def ls_estimator() -> Estimator:
    return lambda data: stage_one(data.Y, data.pattern)[0].H_hat


def lmmse_estimator(stats: ChannelStatistics) -> Estimator:
    def estimate(data: SubframeDataset) -> np.ndarray:
        noise_var = np.unique(data.noise_var)
        if noise_var.size != 1:
            raise ValueError(f"LMMSE needs one noise level per batch, got {noise_var}")
        return lmmse_estimate(ls_at_pilots(data.Y, data.pattern), data.pattern, float(noise_var[0]), stats)
    return estimate


def _chunked(data: SubframeDataset, refine: Callable[[TrainingSet], np.ndarray]) -> np.ndarray:
    parts = []
    for start in range(0, len(data), MODEL_CHUNK):
        chunk = data.subset(slice(start, start + MODEL_CHUNK))
        parts.append(refine(chunk.training_set()))
    return np.concatenate(parts, axis=0)


def _per_thread(model: ICINet) -> Callable[[], ICINet]:
    """Each calling thread gets its own replica; layers cache activations on forward."""
    local = threading.local()
    lock = threading.Lock()

    def replica() -> ICINet:
        if not hasattr(local, "model"):
            with lock:
                local.model = copy.deepcopy(model)
        return local.model
    return replica


def model_estimator(model: ICINet) -> Estimator:
    """H̆ of a trained ICINet (or CasResNet-only model) on top of stage 1."""
    replica = _per_thread(model)
    return lambda data: _chunked(data, lambda s: replica().refine(s.Y, s.X_hat, s.H_hat))


def predn_estimator(model: ICINet) -> Estimator:
    """H̃ of the PreDNN alone."""
    if model.predn is None:
        raise ValueError("model has no PreDNN")
    replica = _per_thread(model)

    def estimate(s: TrainingSet) -> np.ndarray:
        own = replica()
        return channels_to_complex(own.predn.forward(own.features(s.Y, s.X_hat, s.H_hat)))
    return lambda data: _chunked(data, estimate)


# ---------------------------------------
# 3. N_ICI sweep
# ---------------------------------------
@dataclass
class SweepResult:
    rows: List[Tuple[int, float]]
    ls_mse: float

    def mse(self, n_ici: int) -> float:
        return dict(self.rows)[n_ici]

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["n_ici", "mse_predn", "mse_ls"])
        for n_ici, mse in self.rows:
            writer.writerow([n_ici, f"{mse:.10e}", f"{self.ls_mse:.10e}"])
        return buffer.getvalue()


def sweep_n_ici(
    values: Sequence[int],
    config: ExperimentConfig,
    train_set: Optional[TrainingSet] = None,
    val_set: Optional[TrainingSet] = None,
    verbose: bool = True,
) -> SweepResult:
    """Validation MSE of a PreDNN trained per N_ICI on identical data and seeds."""
    if not values:
        raise ValueError("no N_ICI values to sweep")
    if train_set is None:
        train_set = generate_dataset(config, "train", verbose=verbose).training_set()
    if val_set is None:
        val_set = generate_dataset(config, "val", verbose=verbose).training_set()

    rows = []
    for n_ici in values:
        predn_config = PreDnnConfig(n_ici=n_ici)
        predn = create_predn(predn_config, seed=config.training.seed)
        trace = fit_predn(predn, predn_config, train_set, val_set, config.training, verbose)
        rows.append((int(n_ici), trace.final_validation))
        if verbose:
            print(f"✅ N_ICI={n_ici}: validation MSE {trace.final_validation:.4e}")
    ls_mse = grid_mse(val_set.H_hat, val_set.H_true)
    return SweepResult(rows=rows, ls_mse=ls_mse)


# ---------------------------------------
# 4. Complexity table
# ---------------------------------------
@dataclass
class ComplexityTable:
    rows: List[Tuple[str, int, int]]  # (name, MACs, params)

    def row(self, name: str) -> Tuple[int, int]:
        for label, macs, params in self.rows:
            if label == name:
                return macs, params
        raise KeyError(name)

    def to_text(self) -> str:
        lines = [f"{'Network':<12} {'MACs':>12} {'Params':>8}"]
        lines += [f"{name:<12} {macs:>12,d} {params:>8,d}" for name, macs, params in self.rows]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["network", "macs", "params"])
        writer.writerows(self.rows)
        return buffer.getvalue()


def emit_complexity_table(
    architectures: Optional[Mapping[str, ICINet]] = None,
    system: SystemConfig = SystemConfig(),
) -> ComplexityTable:
    if architectures is None:
        architectures = {
            "CasResNet": ICINet.create(None),
            "ICINet": ICINet.create(PreDnnConfig(n_ici=2)),
        }
    return ComplexityTable(
        rows=[(name, *model.complexity(system.K, system.T)) for name, model in architectures.items()]
    )


# ---------------------------------------
# 5. Full experiment
# ---------------------------------------
def checkpoint_path(directory: str, kind: str, config: ExperimentConfig) -> str:
    return os.path.join(directory, f"{kind}-{config.config_hash()[:12]}.iciw")


def _trained(
    kind: str,
    train: Callable[[], TrainingResult],
    expected: ICINet,
    config: ExperimentConfig,
    checkpoint_dir: Optional[str],
    verbose: bool,
) -> ICINet:
    """Load a cached checkpoint when present, otherwise train and cache."""
    path = checkpoint_path(checkpoint_dir, kind, config) if checkpoint_dir else None
    if path and os.path.exists(path):
        if verbose:
            print(f"📂 Reusing {kind} checkpoint: {path}")
        return load_icinet(path, expected=expected)
    result = train()
    if path:
        save_icinet(path, result.model)
        result.save_traces(path[: -len(".iciw")] + ".traces.json")
    return result.model


def train_models(
    config: ExperimentConfig,
    train_set: TrainingSet,
    val_set: TrainingSet,
    checkpoint_dir: Optional[str] = None,
    verbose: bool = True,
) -> Dict[str, ICINet]:
    predn_config = PreDnnConfig(n_ici=config.n_ici)
    casres_config = CasResNetConfig()
    training = config.training
    return {
        "icinet_seq": _trained(
            "icinet_seq",
            lambda: train_sequential(train_set, val_set, training, predn_config, casres_config, verbose),
            ICINet.create(predn_config, casres_config), config, checkpoint_dir, verbose,
        ),
        "icinet_e2e": _trained(
            "icinet_e2e",
            lambda: train_end_to_end(train_set, val_set, training, predn_config, casres_config, verbose),
            ICINet.create(predn_config, casres_config), config, checkpoint_dir, verbose,
        ),
        "casres": _trained(
            "casres",
            lambda: train_casresnet_only(train_set, val_set, training, casres_config, verbose),
            ICINet.create(None, casres_config), config, checkpoint_dir, verbose,
        ),
    }


def run_experiment(
    config: ExperimentConfig,
    checkpoint_dir: Optional[str] = None,
    workers: Optional[int] = None,
    verbose: bool = True,
) -> EvalReport:
    """Generate data, train (or reuse) every model and evaluate all estimators."""
    datasets = {
        split: generate_dataset(config, split, verbose=verbose, workers=workers)
        for split in ("train", "val", "test", "calib")
    }
    models = train_models(
        config, datasets["train"].training_set(), datasets["val"].training_set(), checkpoint_dir, verbose
    )
    stats = estimate_channel_stats(datasets["calib"].H, config.pattern())

    estimators = {
        "ls": ls_estimator(),
        "predn": predn_estimator(models["icinet_seq"]),
        "casres": model_estimator(models["casres"]),
        "icinet_seq": model_estimator(models["icinet_seq"]),
        "icinet_e2e": model_estimator(models["icinet_e2e"]),
        "lmmse": lmmse_estimator(stats),
    }
    metadata = {
        "config_hash": config.config_hash(),
        "preset": config.preset,
        "seed": config.seed,
        "n_ici": config.n_ici,
        "datasets": {split: data.dataset_id() for split, data in datasets.items()},
        "test_subframes_per_snr": config.sizes.test_per_snr,
        "test_doppler_hz": config.test_channel.doppler_hz,
        "nominal_speed_kmh": config.test_channel.speed_kmh,
        "doppler_at_nominal_speed_hz": config.nominal_speed_doppler(),
    }
    report = evaluate_estimators(estimators, datasets["test"], config.snr_grid_db, workers, metadata, verbose)
    if verbose:
        print("✅ Evaluation complete")
    return report
