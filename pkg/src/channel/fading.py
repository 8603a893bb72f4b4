# src/channel/fading.py
"""
Sum-of-sinusoids Rayleigh fading with a Jakes (classical) Doppler spectrum.

Each tap is an independent process

    g_j(t) = sqrt(P_j / M) * sum_m exp(j(2π f_D cos(α_jm) t + φ_jm))

with arrival angles α and phases φ drawn uniformly per tap. Over the ensemble the
autocorrelation is P_j·J0(2π f_D τ) and the power is exactly P_j.
"""

from typing import Sequence

import numpy as np

from src.channel.config import DelayProfile, FadingSpec, SystemConfig


class JakesProcess:
    def __init__(self, spec: FadingSpec, tap_powers: Sequence[float]):
        rng = np.random.default_rng(spec.seed)
        powers = np.asarray(tap_powers, dtype=float)
        shape = (powers.size, spec.num_sinusoids)

        self.doppler_max_hz = spec.doppler_max_hz
        self.arrival_angles = rng.uniform(0.0, 2 * np.pi, shape)
        self.phases = rng.uniform(0.0, 2 * np.pi, shape)
        self.doppler_shifts = spec.doppler_max_hz * np.cos(self.arrival_angles)
        self.amplitudes = np.sqrt(powers / spec.num_sinusoids)

    @property
    def num_taps(self) -> int:
        return self.amplitudes.size

    def evaluate(self, times: np.ndarray) -> np.ndarray:
        """Complex tap gains at `times` (seconds), shape (len(times), num_taps)."""
        times = np.asarray(times, dtype=float)
        angle = 2 * np.pi * times[:, None, None] * self.doppler_shifts[None] + self.phases[None]
        return np.exp(1j * angle).sum(axis=2) * self.amplitudes


def generate_fading(
    spec: FadingSpec,
    profile: DelayProfile,
    config: SystemConfig,
    duration: int,
) -> np.ndarray:
    """Per-tap gains at the sample rate, shape (duration, N_L)."""
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    if duration < config.subframe_samples:
        raise ValueError(
            f"duration {duration} shorter than one subframe ({config.subframe_samples} samples)"
        )
    process = JakesProcess(spec, profile.tap_powers)
    return process.evaluate(np.arange(duration) / config.sample_rate)
