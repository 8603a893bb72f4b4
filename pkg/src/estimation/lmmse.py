# src/estimation/lmmse.py
"""
Full 2-D LMMSE comparator built on empirical channel correlations.

    Ĥ = R_hp (R_pp + σ² D)^-1 ĥ_LS,   D = diag(1 / |x_p|²)

R_hp and R_pp are sample correlations of true CFR grids drawn from the
evaluation channel model; grids are flattened row-major over (K, T) and pilot
vectors row-major over (K_p, T_p).
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from src.channel.ofdm_channel import PilotPattern
from src.errors import NumericalError

DIAGONAL_LOADING = 1e-10


@dataclass(eq=False)
class ChannelStatistics:
    R_hp: np.ndarray  # (K·T, P)
    R_pp: np.ndarray  # (P, P)
    grid_shape: Tuple[int, int]
    num_realizations: int


def estimate_channel_stats(grids: np.ndarray, pattern: PilotPattern) -> ChannelStatistics:
    """Sample correlations from a stack of true CFR grids, shape (N, K, T)."""
    grids = np.asarray(grids)
    if grids.ndim != 3 or grids.shape[0] == 0:
        raise ValueError(f"need a non-empty (N, K, T) stack of grids, got shape {grids.shape}")
    N, K, T = grids.shape
    pattern.check_fits(K, T)
    h = grids.reshape(N, K * T)
    h_p = pattern.take(grids).reshape(N, pattern.num_pilots)
    return ChannelStatistics(
        R_hp=h.T @ h_p.conj() / N,
        R_pp=h_p.T @ h_p.conj() / N,
        grid_shape=(K, T),
        num_realizations=N,
    )


def lmmse_estimate(
    pilot_estimates: np.ndarray,
    pattern: PilotPattern,
    noise_var: float,
    channel_stats: ChannelStatistics,
) -> np.ndarray:
    """LMMSE grid from LS pilot estimates (..., K_p, T_p) → (..., K, T)."""
    estimates = np.asarray(pilot_estimates)
    P = pattern.num_pilots
    if estimates.shape[-2:] != (pattern.K_p, pattern.T_p):
        raise ValueError(f"pilot estimates shape {estimates.shape} does not match pattern ({pattern.K_p}, {pattern.T_p})")
    if channel_stats.R_pp.shape != (P, P):
        raise ValueError(f"statistics cover {channel_stats.R_pp.shape[0]} pilots, pattern has {P}")

    batch_shape = estimates.shape[:-2]
    h_ls = estimates.reshape(-1, P).T  # (P, M)

    pilot_energy = np.abs(pattern.pilot_symbols.reshape(P)) ** 2
    system = channel_stats.R_pp + noise_var * np.diag(1.0 / pilot_energy) + DIAGONAL_LOADING * np.eye(P)
    try:
        factor = cho_factor(system, lower=True)
        weights = cho_solve(factor, h_ls)
    except LinAlgError as e:
        raise NumericalError(f"LMMSE system is singular (σ²={noise_var:g}, P={P}): {e}") from e
    if not np.all(np.isfinite(weights)):
        raise NumericalError(f"LMMSE solve produced non-finite values (σ²={noise_var:g})")

    grid = (channel_stats.R_hp @ weights).T
    return grid.reshape(batch_shape + channel_stats.grid_shape)
