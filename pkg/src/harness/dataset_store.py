# src/harness/dataset_store.py
"""
Subframe datasets: generation per split and the "ICIN" binary format.

    magic "ICIN" | u32 version | u32 K, T, N | u64 seed
    | u32 split-name length, split name (UTF-8)
    | u32 K_p, T_p | i4 subcarrier_indices[K_p] | i4 symbol_indices[T_p]
    | c16 pilot_symbols[K_p·T_p]
    | N packed records: f4 snr_db, f4 noise_var, f4 doppler_hz, u4 num_taps,
      c8 X[K·T], c8 Y[K·T], c8 H[K·T]

Everything is little-endian; grids are stored row-major over (K, T).
"""

import hashlib
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from src.channel.config import FadingSpec
from src.channel.ofdm_channel import PilotPattern, generate_subframe
from src.errors import FormatError
from src.harness.config import SPLITS, ExperimentConfig
from src.icinet.training import TrainingSet
from src.io_utils import ByteReader, atomic_write_bytes, read_bytes
from src.settings import worker_count

MAGIC = b"ICIN"
VERSION = 1


def record_dtype(K: int, T: int) -> np.dtype:
    return np.dtype([
        ("snr_db", "<f4"),
        ("noise_var", "<f4"),
        ("doppler_hz", "<f4"),
        ("num_taps", "<u4"),
        ("X", "<c8", (K, T)),
        ("Y", "<c8", (K, T)),
        ("H", "<c8", (K, T)),
    ])


@dataclass(eq=False)
class SubframeDataset:
    """In-memory subframes of one split; grids are (N, K, T) complex64."""

    split: str
    seed: int
    pattern: PilotPattern
    X: np.ndarray
    Y: np.ndarray
    H: np.ndarray
    snr_db: np.ndarray
    noise_var: np.ndarray
    doppler_hz: np.ndarray
    num_taps: np.ndarray

    def __len__(self) -> int:
        return self.Y.shape[0]

    @property
    def grid_shape(self) -> Tuple[int, int]:
        return self.Y.shape[1], self.Y.shape[2]

    def snr_values(self) -> Tuple[float, ...]:
        return tuple(float(v) for v in np.unique(self.snr_db))

    def subset(self, index) -> "SubframeDataset":
        return SubframeDataset(
            split=self.split,
            seed=self.seed,
            pattern=self.pattern,
            X=self.X[index],
            Y=self.Y[index],
            H=self.H[index],
            snr_db=self.snr_db[index],
            noise_var=self.noise_var[index],
            doppler_hz=self.doppler_hz[index],
            num_taps=self.num_taps[index],
        )

    def at_snr(self, snr_db: float) -> "SubframeDataset":
        # stored as f4, so compare at that precision
        selected = np.flatnonzero(self.snr_db == np.float32(snr_db))
        if selected.size == 0:
            raise ValueError(f"{self.split} dataset has no subframes at {snr_db} dB (has {self.snr_values()})")
        return self.subset(selected)

    def training_set(self) -> TrainingSet:
        return TrainingSet.build(self.Y, self.H, self.pattern)

    def dataset_id(self) -> str:
        digest = hashlib.sha1(encode_dataset(self)).hexdigest()[:12]
        return f"{self.split}-{self.seed}-{len(self)}-{digest}"


# ---------------------------------------
# 1. Draw subframes
# ---------------------------------------
@dataclass(frozen=True)
class _Job:
    snr_db: float
    doppler_hz: float
    num_taps: int
    channel_seed: int
    noise_seed: Optional[int]
    eval_channel: bool


def _plan(config: ExperimentConfig, split: str, split_seed: int) -> Sequence[_Job]:
    """Per-subframe parameters, drawn up front so the result is independent of threading."""
    if split in ("train", "val"):
        channel = config.train_channel
        rng = np.random.default_rng(np.random.SeedSequence([split_seed, 0]))
        count = config.split_size(split)
        taps = rng.integers(channel.min_taps, channel.max_taps + 1, size=count)
        doppler = rng.uniform(channel.min_doppler_hz, channel.max_doppler_hz, size=count)
        return [
            _Job(channel.snr_db, float(doppler[i]), int(taps[i]), _child_seed(split_seed, i), None, False)
            for i in range(count)
        ]

    doppler = config.test_channel.doppler_hz
    num_taps = config.test_profile().num_taps
    if split == "calib":
        top_snr = max(config.snr_grid_db)
        return [
            _Job(top_snr, doppler, num_taps, _child_seed(split_seed, i), None, True)
            for i in range(config.sizes.calibration)
        ]

    # test: the same channel/data draws are reused at every SNR point, only the noise changes
    return [
        _Job(float(snr), doppler, num_taps, _child_seed(split_seed, i), _child_seed(split_seed, i, s + 1), True)
        for s, snr in enumerate(config.snr_grid_db)
        for i in range(config.sizes.test_per_snr)
    ]


def _child_seed(*entropy: int) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1)[0])


def _draw(config: ExperimentConfig, pattern: PilotPattern, job: _Job):
    if job.eval_channel:
        profile, fading = config.test_profile(), config.eval_fading()
    else:
        profile = config.train_channel.profile(job.num_taps)
        fading = FadingSpec(job.doppler_hz, num_sinusoids=config.num_sinusoids)
    subframe = generate_subframe(
        config.system, profile, fading, pattern, job.snr_db, seed=job.channel_seed, noise_seed=job.noise_seed
    )
    return subframe.X, subframe.Y, subframe.channel.true_cfr, subframe.noise_var


def generate_dataset(
    config: ExperimentConfig,
    split: str,
    seed: Optional[int] = None,
    verbose: bool = True,
    workers: Optional[int] = None,
) -> SubframeDataset:
    """Subframes of one split, deterministic in (config, seed) whatever the worker count."""
    if split not in SPLITS:
        raise ValueError(f"unknown split {split!r} (expected one of {SPLITS})")
    if seed is not None:
        config = config.with_seed(seed)
    split_seed = config.derive_seed(split)
    pattern = config.pattern()
    jobs = _plan(config, split, split_seed)
    workers = workers or worker_count()

    if verbose:
        print(f"🔁 Generating {len(jobs)} '{split}' subframes with {workers} worker(s)...")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda job: _draw(config, pattern, job), jobs))

    K, T = config.system.K, config.system.T
    dataset = SubframeDataset(
        split=split,
        seed=config.seed,
        pattern=pattern,
        X=np.array([r[0] for r in results], dtype=np.complex64).reshape(len(jobs), K, T),
        Y=np.array([r[1] for r in results], dtype=np.complex64).reshape(len(jobs), K, T),
        H=np.array([r[2] for r in results], dtype=np.complex64).reshape(len(jobs), K, T),
        snr_db=np.array([j.snr_db for j in jobs], dtype=np.float32),
        noise_var=np.array([r[3] for r in results], dtype=np.float32),
        doppler_hz=np.array([j.doppler_hz for j in jobs], dtype=np.float32),
        num_taps=np.array([j.num_taps for j in jobs], dtype=np.uint32),
    )
    if verbose:
        print(f"✅ Generated '{split}' dataset ({len(dataset)} subframes)")
    return dataset


# ---------------------------------------
# 2. Encode / decode
# ---------------------------------------
def encode_dataset(dataset: SubframeDataset) -> bytes:
    N = len(dataset)
    K, T = dataset.grid_shape
    pattern = dataset.pattern
    split_bytes = dataset.split.encode("utf-8")

    records = np.empty(N, dtype=record_dtype(K, T))
    for name in ("snr_db", "noise_var", "doppler_hz", "num_taps", "X", "Y", "H"):
        records[name] = getattr(dataset, name)

    return b"".join([
        MAGIC,
        struct.pack("<IIIIQ", VERSION, K, T, N, dataset.seed),
        struct.pack("<I", len(split_bytes)),
        split_bytes,
        struct.pack("<II", pattern.K_p, pattern.T_p),
        pattern.subcarrier_indices.astype("<i4").tobytes(),
        pattern.symbol_indices.astype("<i4").tobytes(),
        pattern.pilot_symbols.astype("<c16").tobytes(),
        records.tobytes(),
    ])


def decode_dataset(payload: bytes) -> SubframeDataset:
    reader = ByteReader(payload, "dataset file")
    if reader.take(4) != MAGIC:
        raise FormatError("not an ICIN dataset file (bad magic)")
    version = reader.u32()
    if version != VERSION:
        raise FormatError(f"unsupported ICIN version {version} (expected {VERSION})")
    K, T, N = reader.u32(3)
    seed = reader.u64()
    split = reader.take(reader.u32()).decode("utf-8")
    K_p, T_p = reader.u32(2)
    try:
        pattern = PilotPattern(
            subcarrier_indices=reader.array("<i4", (K_p,)),
            symbol_indices=reader.array("<i4", (T_p,)),
            pilot_symbols=reader.array("<c16", (K_p, T_p)),
        )
        pattern.check_fits(K, T)
    except ValueError as e:
        raise FormatError(f"dataset file carries an invalid pilot pattern: {e}") from e
    records = reader.array(record_dtype(K, T), (N,))
    reader.finish()

    return SubframeDataset(
        split=split,
        seed=seed,
        pattern=pattern,
        X=records["X"].copy(),
        Y=records["Y"].copy(),
        H=records["H"].copy(),
        snr_db=records["snr_db"].copy(),
        noise_var=records["noise_var"].copy(),
        doppler_hz=records["doppler_hz"].copy(),
        num_taps=records["num_taps"].copy(),
    )


# ---------------------------------------
# 3. Persist
# ---------------------------------------
def write_dataset(path: str, dataset: SubframeDataset, verbose: bool = True) -> None:
    atomic_write_bytes(path, encode_dataset(dataset))
    if verbose:
        print(f"💾 Saved {len(dataset)} '{dataset.split}' subframes to {path}")


def read_dataset(path: str, verbose: bool = True) -> SubframeDataset:
    if verbose:
        print(f"📂 Loading dataset from: {path}")
    dataset = decode_dataset(read_bytes(path, "dataset"))
    if verbose:
        print(f"✅ Loaded {len(dataset)} '{dataset.split}' subframes")
    return dataset
