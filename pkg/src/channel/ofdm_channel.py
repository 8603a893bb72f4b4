# src/channel/ofdm_channel.py
"""
OFDM link over a doubly-selective channel.

Grids are numpy arrays of shape (K, T): subcarrier along axis 0, OFDM symbol
along axis 1. Indices are 0-based throughout. The DFT is unitary, so the CFR
diagonal is the plain DFT of the symbol-averaged tap vector.
"""

import io
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import dft

from src.channel.config import DelayProfile, FadingSpec, SystemConfig
from src.channel.fading import generate_fading
from src.io_utils import atomic_write_text

QPSK_ALPHABET = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2)


def qpsk_alphabet() -> np.ndarray:
    """Unit-energy Gray QPSK; index order is the tie-break order of hard decisions."""
    return QPSK_ALPHABET.copy()


def qpsk_modulate(bits: np.ndarray) -> np.ndarray:
    """Map bit pairs (..., 2) to symbols: bit 0 → sign of I, bit 1 → sign of Q."""
    bits = np.asarray(bits)
    if bits.shape[-1] != 2:
        raise ValueError(f"bits must have a trailing axis of 2, got shape {bits.shape}")
    return ((1 - 2 * bits[..., 0]) + 1j * (1 - 2 * bits[..., 1])) / np.sqrt(2)


# ---------- pilot layout ----------

class PilotPreset(str, Enum):
    P84 = "P84"
    P48 = "P48"


# (spacing, pilot subcarrier count, pilot symbols)
_PRESETS = {
    PilotPreset.P84: (6, 21, (1, 5, 9, 13)),
    PilotPreset.P48: (8, 16, (1, 7, 13)),
}


@dataclass(eq=False)
class PilotPattern:
    subcarrier_indices: np.ndarray
    symbol_indices: np.ndarray
    pilot_symbols: np.ndarray  # (K_p, T_p)

    def __post_init__(self):
        self.subcarrier_indices = np.asarray(self.subcarrier_indices, dtype=int)
        self.symbol_indices = np.asarray(self.symbol_indices, dtype=int)
        self.pilot_symbols = np.asarray(self.pilot_symbols, dtype=complex)

        if self.subcarrier_indices.size == 0 or self.symbol_indices.size == 0:
            raise ValueError("pilot pattern needs at least one subcarrier and one symbol")
        spacing = np.diff(self.subcarrier_indices)
        if np.any(spacing <= 0) or np.any(spacing != spacing[:1]):
            raise ValueError(f"pilot subcarriers must be ascending and evenly spaced: {self.subcarrier_indices}")
        if np.any(np.diff(self.symbol_indices) < 2):
            raise ValueError(f"pilot symbols must be ascending and nonconsecutive: {self.symbol_indices}")
        if self.pilot_symbols.shape != (self.K_p, self.T_p):
            raise ValueError(
                f"pilot_symbols shape {self.pilot_symbols.shape} != ({self.K_p}, {self.T_p})"
            )

    @property
    def K_p(self) -> int:
        return self.subcarrier_indices.size

    @property
    def T_p(self) -> int:
        return self.symbol_indices.size

    @property
    def num_pilots(self) -> int:
        return self.K_p * self.T_p

    @classmethod
    def grid(
        cls,
        K: int,
        T: int,
        spacing: int,
        symbol_indices: Sequence[int],
        seed: int = 0,
        offset: int = 0,
        count: Optional[int] = None,
    ) -> "PilotPattern":
        """`count` pilot subcarriers spaced `spacing` from `offset` (default: all that fit)."""
        if spacing < 1:
            raise ValueError(f"pilot spacing must be >= 1, got {spacing}")
        subcarriers = np.arange(offset, K, spacing) if count is None else offset + spacing * np.arange(count)
        symbols = np.asarray(symbol_indices)
        pattern = cls(subcarriers, symbols, _pilot_qpsk(subcarriers.size, symbols.size, seed))
        pattern.check_fits(K, T)
        return pattern

    def check_fits(self, K: int, T: int) -> None:
        if self.subcarrier_indices[0] < 0 or self.subcarrier_indices[-1] >= K:
            raise ValueError(f"pilot subcarriers {self.subcarrier_indices} outside 0..{K - 1}")
        if self.symbol_indices[0] < 0 or self.symbol_indices[-1] >= T:
            raise ValueError(f"pilot symbols {self.symbol_indices} outside 0..{T - 1}")

    def mask(self, K: int, T: int) -> np.ndarray:
        mask = np.zeros((K, T), dtype=bool)
        mask[np.ix_(self.subcarrier_indices, self.symbol_indices)] = True
        return mask

    def take(self, grid: np.ndarray) -> np.ndarray:
        """Pilot-position entries of a (..., K, T) grid, shape (..., K_p, T_p)."""
        return grid[..., self.subcarrier_indices[:, None], self.symbol_indices[None, :]]

    def place(self, grid: np.ndarray, values: np.ndarray) -> None:
        grid[..., self.subcarrier_indices[:, None], self.symbol_indices[None, :]] = values


def _pilot_qpsk(K_p: int, T_p: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return qpsk_modulate(rng.integers(0, 2, size=(K_p, T_p, 2)))


def make_pilot_pattern(preset: PilotPreset, config: SystemConfig, seed: int = 0) -> PilotPattern:
    preset = PilotPreset(preset)
    if config.K != 128 or config.T != 14:
        raise ValueError(f"preset {preset.value} needs K=128, T=14; got K={config.K}, T={config.T}")
    spacing, count, symbols = _PRESETS[preset]
    return PilotPattern.grid(config.K, config.T, spacing, symbols, seed=seed, count=count)


# ---------- channel realization ----------

@dataclass(eq=False)
class ChannelRealization:
    tap_gains: np.ndarray  # (T, K, N_L): symbol, post-CP sample instant, tap
    tap_delays: np.ndarray  # (N_L,) sample delays
    true_cfr: np.ndarray  # (K, T) diagonal of H^(t)
    doppler_max_hz: float = 0.0

    @property
    def N_L(self) -> int:
        return self.tap_delays.size

    @property
    def T(self) -> int:
        return self.tap_gains.shape[0]

    @classmethod
    def from_tap_gains(
        cls, tap_gains: np.ndarray, tap_delays: Sequence[int], doppler_max_hz: float = 0.0
    ) -> "ChannelRealization":
        tap_gains = np.asarray(tap_gains, dtype=complex)
        delays = np.asarray(tap_delays, dtype=int)
        if tap_gains.ndim != 3 or tap_gains.shape[2] != delays.size:
            raise ValueError(f"tap_gains must be (T, K, {delays.size}), got {tap_gains.shape}")
        K = tap_gains.shape[1]
        if np.unique(delays % K).size != delays.size:
            raise ValueError(f"tap delays {delays} collide modulo K={K}")
        # diag(F G F^H)_k = sum_j mean_i(g_ij) e^{-j2πk d_j / K}
        mean_gains = tap_gains.mean(axis=1)  # (T, N_L)
        steering = np.exp(-2j * np.pi * np.outer(np.arange(K), delays) / K)  # (K, N_L)
        return cls(tap_gains, delays, steering @ mean_gains.T, doppler_max_hz)


def realize_channel(config: SystemConfig, profile: DelayProfile, fading: FadingSpec) -> ChannelRealization:
    """One subframe of fading; the process runs continuously through CPs and symbols."""
    profile.check_against(config)
    samples = generate_fading(fading, profile, config, config.subframe_samples)
    per_symbol = samples.reshape(config.T, config.symbol_length, profile.num_taps)
    return ChannelRealization.from_tap_gains(
        per_symbol[:, config.N_cp:, :], profile.tap_delays, fading.doppler_max_hz
    )


def build_cir_matrix(realization: ChannelRealization, t: int, config: SystemConfig) -> np.ndarray:
    """G^(t): row i holds g_{i,j} at column (i - d_j) mod K."""
    if not 0 <= t < realization.T:
        raise IndexError(f"symbol index {t} outside 0..{realization.T - 1}")
    K = config.K
    rows = np.arange(K)
    G = np.zeros((K, K), dtype=complex)
    for j, delay in enumerate(realization.tap_delays):
        G[rows, (rows - delay) % K] = realization.tap_gains[t, :, j]
    return G


def cfr_from_cir(G: np.ndarray) -> np.ndarray:
    """H = F G F^H with the unitary DFT matrix F."""
    G = np.asarray(G)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError(f"CIR matrix must be square, got shape {G.shape}")
    F = dft(G.shape[0], scale="sqrtn")
    return F @ G @ F.conj().T


def apply_channel(
    X: np.ndarray,
    realization: ChannelRealization,
    noise_var: float,
    config: SystemConfig,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Y_t = H^(t) X_t + W_t, evaluated as DFT(G^(t) · IDFT(X_t)) without forming H."""
    X = np.asarray(X)
    if X.shape != (config.K, config.T):
        raise ValueError(f"X must have shape ({config.K}, {config.T}), got {X.shape}")
    if realization.tap_gains.shape[:2] != (config.T, config.K):
        raise ValueError(
            f"realization covers {realization.tap_gains.shape[:2]} (T, K), expected ({config.T}, {config.K})"
        )
    if noise_var < 0:
        raise ValueError(f"noise_var must be >= 0, got {noise_var}")

    x_time = np.fft.ifft(X, axis=0, norm="ortho")
    y_time = np.zeros_like(x_time)
    for j, delay in enumerate(realization.tap_delays):
        # rolled[i] = x[(i - d) mod K]
        y_time += realization.tap_gains[:, :, j].T * np.roll(x_time, delay, axis=0)
    Y = np.fft.fft(y_time, axis=0, norm="ortho")

    if noise_var > 0:
        rng = rng if rng is not None else np.random.default_rng()
        noise = rng.standard_normal(Y.shape) + 1j * rng.standard_normal(Y.shape)
        Y = Y + np.sqrt(noise_var / 2) * noise
    return Y


# ---------- subframes ----------

@dataclass(eq=False)
class Subframe:
    X: np.ndarray
    Y: np.ndarray
    pilot_pattern: PilotPattern
    channel: ChannelRealization
    noise_var: float
    snr_db: float


def snr_to_noise_var(snr_db: float) -> float:
    return float(10.0 ** (-snr_db / 10.0))


def generate_subframe(
    config: SystemConfig,
    profile: DelayProfile,
    fading_spec: FadingSpec,
    pattern: PilotPattern,
    snr_db: float,
    seed: int,
    noise_seed: Optional[int] = None,
) -> Subframe:
    """
    Draw fading, QPSK data and noise from independent streams spawned from `seed`.
    `fading_spec.seed` is replaced by the derived fading stream. Passing
    `noise_seed` keeps channel and data fixed while redrawing only the noise.
    """
    pattern.check_fits(config.K, config.T)
    fading_ss, data_ss, noise_ss = np.random.SeedSequence(seed).spawn(3)

    fading = replace(fading_spec, seed=int(fading_ss.generate_state(1)[0]))
    channel = realize_channel(config, profile, fading)

    data_rng = np.random.default_rng(data_ss)
    X = qpsk_modulate(data_rng.integers(0, 2, size=(config.K, config.T, 2)))
    pattern.place(X, pattern.pilot_symbols)

    noise_var = snr_to_noise_var(snr_db)
    noise_rng = np.random.default_rng(noise_ss if noise_seed is None else noise_seed)
    Y = apply_channel(X, channel, noise_var, config, rng=noise_rng)
    return Subframe(X=X, Y=Y, pilot_pattern=pattern, channel=channel, noise_var=noise_var, snr_db=snr_db)


def dump_cfr_magnitude(
    realization: ChannelRealization,
    t: int,
    config: SystemConfig,
    path: Optional[str] = None,
) -> np.ndarray:
    """|H^(t)| normalized to a unit maximum; optionally written as a K×K CSV."""
    H = cfr_from_cir(build_cir_matrix(realization, t, config))
    magnitude = np.abs(H)
    magnitude = magnitude / magnitude.max()
    if path is not None:
        buffer = io.StringIO()
        np.savetxt(buffer, magnitude, delimiter=",", fmt="%.10e")
        atomic_write_text(path, buffer.getvalue())
    return magnitude
