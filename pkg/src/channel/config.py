# src/channel/config.py
"""
System, delay-profile and fading parameters for the doubly-selective channel.

Delays are integer sample indices on the K·Δf sample grid; powers are linear
and normalized to unit sum so the channel has unit average power.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

# 3GPP Extended Vehicular A (TS 36.101 Annex B)
EVA_DELAYS_NS = (0, 30, 150, 310, 370, 710, 1090, 1730, 2510)
EVA_POWERS_DB = (0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9)


@dataclass(frozen=True)
class SystemConfig:
    K: int = 128
    T: int = 14
    N_cp: int = 16
    delta_f: float = 15_000.0
    f_c: float = 2e9

    def __post_init__(self):
        if self.K < 2:
            raise ValueError(f"K must be >= 2, got {self.K}")
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if self.N_cp < 0:
            raise ValueError(f"N_cp must be >= 0, got {self.N_cp}")
        if self.delta_f <= 0:
            raise ValueError(f"delta_f must be positive, got {self.delta_f}")

    @property
    def sample_rate(self) -> float:
        return self.K * self.delta_f

    @property
    def symbol_length(self) -> int:
        """Samples per OFDM symbol including the cyclic prefix."""
        return self.K + self.N_cp

    @property
    def subframe_samples(self) -> int:
        return self.T * self.symbol_length


class ProfileKind(str, Enum):
    LINEAR_ATTENUATION = "LA"
    EVA = "EVA"


@dataclass(frozen=True)
class DelayProfile:
    kind: ProfileKind
    tap_delays: Tuple[int, ...]
    tap_powers: Tuple[float, ...]

    def __post_init__(self):
        delays = np.asarray(self.tap_delays)
        powers = np.asarray(self.tap_powers, dtype=float)
        if delays.size == 0 or delays.size != powers.size:
            raise ValueError("tap_delays and tap_powers must be non-empty and equally long")
        if delays[0] != 0:
            raise ValueError(f"first tap delay must be 0, got {delays[0]}")
        if np.any(np.diff(delays) <= 0):
            raise ValueError(f"tap delays must be strictly ascending: {self.tap_delays}")
        if np.any(powers < 0):
            raise ValueError("tap powers must be non-negative")
        if abs(powers.sum() - 1.0) > 1e-12:
            raise ValueError(f"tap powers must sum to 1, got {powers.sum():.15f}")

    @property
    def num_taps(self) -> int:
        return len(self.tap_delays)

    @property
    def max_delay(self) -> int:
        return int(self.tap_delays[-1])

    def check_against(self, config: SystemConfig) -> None:
        """The ISI-free condition: every delay must fit inside the cyclic prefix."""
        if self.max_delay > config.N_cp:
            raise ValueError(
                f"{self.kind.value} profile delay {self.max_delay} exceeds N_cp={config.N_cp}"
            )
        if self.max_delay >= config.K:
            raise ValueError(f"{self.kind.value} profile delay {self.max_delay} must be < K={config.K}")


def _normalized(powers: np.ndarray) -> Tuple[float, ...]:
    powers = np.asarray(powers, dtype=float)
    return tuple(float(p) for p in powers / powers.sum())


def linear_attenuation_profile(num_taps: int) -> DelayProfile:
    """Taps at samples 0..N_L-1 whose power falls linearly in dB from 0 to -20 dB."""
    if num_taps < 1:
        raise ValueError(f"num_taps must be >= 1, got {num_taps}")
    powers_db = np.linspace(0.0, -20.0, num_taps)
    return DelayProfile(
        kind=ProfileKind.LINEAR_ATTENUATION,
        tap_delays=tuple(range(num_taps)),
        tap_powers=_normalized(10.0 ** (powers_db / 10.0)),
    )


def eva_profile(sample_rate: float, max_paths: int = 6) -> DelayProfile:
    """
    EVA resampled onto the sample grid: delays are rounded to whole samples, taps
    sharing a sample are power-summed, and the strongest `max_paths` merged taps
    are kept. At 1.92 MHz the merge leaves five taps, all of which survive.
    """
    if max_paths < 1:
        raise ValueError(f"max_paths must be >= 1, got {max_paths}")
    delays = np.rint(np.asarray(EVA_DELAYS_NS) * 1e-9 * sample_rate).astype(int)
    powers = 10.0 ** (np.asarray(EVA_POWERS_DB) / 10.0)

    merged_delays, inverse = np.unique(delays, return_inverse=True)
    merged_powers = np.zeros(merged_delays.size)
    np.add.at(merged_powers, inverse, powers)

    keep = np.sort(np.argsort(-merged_powers, kind="stable")[:max_paths])
    kept_delays = merged_delays[keep]
    # re-anchor so the first surviving tap sits at delay 0
    kept_delays = kept_delays - kept_delays[0]
    return DelayProfile(
        kind=ProfileKind.EVA,
        tap_delays=tuple(int(d) for d in kept_delays),
        tap_powers=_normalized(merged_powers[keep]),
    )


@dataclass(frozen=True)
class FadingSpec:
    doppler_max_hz: float
    num_sinusoids: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.doppler_max_hz < 0:
            raise ValueError(f"doppler_max_hz must be >= 0, got {self.doppler_max_hz}")
        if self.num_sinusoids < 8:
            raise ValueError(f"num_sinusoids must be >= 8, got {self.num_sinusoids}")


def doppler_from_speed(speed_kmh: float, f_c: float) -> float:
    """Maximum Doppler shift f_D = v·f_c/c."""
    return speed_kmh / 3.6 * f_c / SPEED_OF_LIGHT


def normalized_doppler(doppler_max_hz: float, delta_f: float) -> float:
    """f_d = f_D / Δf."""
    return doppler_max_hz / delta_f
