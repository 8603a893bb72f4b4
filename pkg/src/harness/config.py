# src/harness/config.py
"""
Experiment configuration.

An ExperimentConfig is a tree of dataclasses that round-trips through JSON.
Fields missing from a JSON file take the value of the selected preset
("desk" unless the file says otherwise).
"""

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional, Tuple

import numpy as np

from src.channel.config import (
    DelayProfile,
    FadingSpec,
    SystemConfig,
    doppler_from_speed,
    eva_profile,
    linear_attenuation_profile,
)
from src.channel.ofdm_channel import PilotPattern, PilotPreset, make_pilot_pattern
from src.icinet.training import TrainingConfig

SPLITS = ("train", "val", "test", "calib")
_SEED_TAGS = {"train": 1, "val": 2, "test": 3, "calib": 4, "model": 5}


@dataclass(frozen=True)
class TrainChannelConfig:
    min_taps: int = 3
    max_taps: int = 9
    min_doppler_hz: float = 800.0
    max_doppler_hz: float = 1200.0
    snr_db: float = 10.0

    def profile(self, num_taps: int) -> DelayProfile:
        return linear_attenuation_profile(num_taps)


@dataclass(frozen=True)
class EvalChannelConfig:
    max_paths: int = 6
    doppler_hz: float = 926.0
    speed_kmh: float = 500.0  # metadata only

    def profile(self, system: SystemConfig) -> DelayProfile:
        return eva_profile(system.sample_rate, self.max_paths)


@dataclass(frozen=True)
class DatasetSizes:
    train: int = 2000
    val: int = 400
    test_per_snr: int = 200
    calibration: int = 1000


@dataclass(frozen=True)
class PilotLayout:
    """Custom pilot grid for systems other than 128×14."""

    spacing: int
    symbol_indices: Tuple[int, ...]
    offset: int = 0
    count: Optional[int] = None


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemConfig = SystemConfig()
    pilot_preset: str = PilotPreset.P84.value
    pilot_layout: Optional[PilotLayout] = None
    pilot_seed: int = 0
    snr_grid_db: Tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    train_channel: TrainChannelConfig = TrainChannelConfig()
    test_channel: EvalChannelConfig = EvalChannelConfig()
    sizes: DatasetSizes = DatasetSizes()
    training: TrainingConfig = TrainingConfig.desk()
    n_ici: int = 2
    num_sinusoids: int = 32
    seed: int = 0
    preset: str = "desk"

    def __post_init__(self):
        for name in ("train", "val", "test_per_snr", "calibration"):
            if getattr(self.sizes, name) < 1:
                raise ValueError(f"sizes.{name} must be positive, got {getattr(self.sizes, name)}")
        if not self.snr_grid_db:
            raise ValueError("snr_grid_db must not be empty")
        if self.train_channel.min_taps < 1 or self.train_channel.max_taps < self.train_channel.min_taps:
            raise ValueError(
                f"invalid train tap range {self.train_channel.min_taps}..{self.train_channel.max_taps}"
            )
        if self.train_channel.max_taps - 1 > self.system.N_cp:
            raise ValueError(
                f"train channel max delay {self.train_channel.max_taps - 1} exceeds the CP length {self.system.N_cp}"
            )
        self.test_profile().check_against(self.system)

    # ---------- presets ----------

    @classmethod
    def desk(cls, seed: int = 0) -> "ExperimentConfig":
        return cls(seed=seed, training=replace(TrainingConfig.desk(), seed=seed), preset="desk")

    @classmethod
    def full(cls, seed: int = 0) -> "ExperimentConfig":
        return cls(
            sizes=DatasetSizes(train=10000, val=2000, test_per_snr=2000, calibration=2000),
            training=TrainingConfig.full(seed),
            seed=seed,
            preset="full",
        )

    @classmethod
    def preset_named(cls, name: str, seed: int = 0) -> "ExperimentConfig":
        if name not in ("desk", "full"):
            raise ValueError(f"unknown preset {name!r} (expected 'desk' or 'full')")
        return cls.desk(seed) if name == "desk" else cls.full(seed)

    # ---------- JSON ----------

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict, seed: Optional[int] = None) -> "ExperimentConfig":
        data = dict(data)
        base = cls.preset_named(data.get("preset", "desk"), seed=data.get("seed", 0))
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")

        updates = {}
        nested = {
            "system": SystemConfig,
            "train_channel": TrainChannelConfig,
            "test_channel": EvalChannelConfig,
            "sizes": DatasetSizes,
            "training": TrainingConfig,
        }
        for name, value in data.items():
            if name in nested:
                updates[name] = replace(getattr(base, name), **value)
            elif name == "pilot_layout":
                updates[name] = None if value is None else PilotLayout(
                    spacing=value["spacing"],
                    symbol_indices=tuple(value["symbol_indices"]),
                    offset=value.get("offset", 0),
                    count=value.get("count"),
                )
            elif name == "snr_grid_db":
                updates[name] = tuple(float(v) for v in value)
            else:
                updates[name] = value
        config = replace(base, **updates)
        if seed is not None:
            config = config.with_seed(seed)
        return config

    @classmethod
    def from_json(cls, path: str, seed: Optional[int] = None) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except OSError as e:
            raise RuntimeError(f"❌ Failed to read config {path}: {e}") from e
        return cls.from_dict(data, seed=seed)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=seed, training=replace(self.training, seed=seed))

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha1(canonical.encode("utf-8")).hexdigest()

    # ---------- derived objects ----------

    def pattern(self) -> PilotPattern:
        if self.pilot_layout is not None:
            layout = self.pilot_layout
            return PilotPattern.grid(
                self.system.K, self.system.T, layout.spacing, layout.symbol_indices,
                seed=self.pilot_seed, offset=layout.offset, count=layout.count,
            )
        return make_pilot_pattern(PilotPreset(self.pilot_preset), self.system, seed=self.pilot_seed)

    def test_profile(self) -> DelayProfile:
        return self.test_channel.profile(self.system)

    def eval_fading(self) -> FadingSpec:
        return FadingSpec(self.test_channel.doppler_hz, num_sinusoids=self.num_sinusoids)

    def nominal_speed_doppler(self) -> float:
        return doppler_from_speed(self.test_channel.speed_kmh, self.system.f_c)

    def derive_seed(self, tag: str, *extra: int) -> int:
        """Independent 32-bit seed for a named stream (split, phase, SNR index, ...)."""
        if tag not in _SEED_TAGS:
            raise ValueError(f"unknown seed tag {tag!r}")
        sequence = np.random.SeedSequence([self.seed, _SEED_TAGS[tag], *extra])
        return int(sequence.generate_state(1)[0])

    def split_size(self, split: str) -> int:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r} (expected one of {SPLITS})")
        sizes = {
            "train": self.sizes.train,
            "val": self.sizes.val,
            "test": self.sizes.test_per_snr * len(self.snr_grid_db),
            "calib": self.sizes.calibration,
        }
        return sizes[split]

