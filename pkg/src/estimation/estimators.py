# src/estimation/estimators.py
"""
Stage-1 channel estimation: LS at the pilots, separable linear interpolation
onto the full grid, and single-tap equalization with hard QPSK decisions.

Every routine accepts a single (K, T) grid or a batch (..., K, T).
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.channel.ofdm_channel import QPSK_ALPHABET, PilotPattern

DEGENERATE_CHANNEL = 1e-12


@dataclass(eq=False)
class InitialEstimate:
    H_hat: np.ndarray
    source_pattern: PilotPattern


@dataclass(eq=False)
class SymbolDecisions:
    X_hat: np.ndarray
    alphabet: np.ndarray
    flagged: np.ndarray  # positions where |Ĥ| was too small to equalize


def ls_at_pilots(Y: np.ndarray, pattern: PilotPattern) -> np.ndarray:
    """Y / X_pilot at every pilot position, shape (..., K_p, T_p)."""
    Y = np.asarray(Y)
    pattern.check_fits(Y.shape[-2], Y.shape[-1])
    if np.any(np.abs(pattern.pilot_symbols) == 0):
        raise ValueError("pilot symbols must be nonzero for LS estimation")
    return pattern.take(Y) / pattern.pilot_symbols


def _linear_weights(xp: np.ndarray, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bracketing indices and weights for linear interpolation with edge hold."""
    xp = np.asarray(xp, dtype=float)
    x = np.asarray(x, dtype=float)
    if xp.size == 1:
        zeros = np.zeros(x.size, dtype=int)
        return zeros, zeros, np.zeros(x.size)
    clipped = np.clip(x, xp[0], xp[-1])
    hi = np.clip(np.searchsorted(xp, clipped, side="right"), 1, xp.size - 1)
    lo = hi - 1
    weight = (clipped - xp[lo]) / (xp[hi] - xp[lo])
    return lo, hi, weight


def interpolate_grid(pilot_estimates: np.ndarray, pattern: PilotPattern, K: int, T: int) -> InitialEstimate:
    """Frequency-then-time linear interpolation of pilot estimates onto (..., K, T)."""
    estimates = np.asarray(pilot_estimates)
    if estimates.size == 0:
        raise ValueError("no pilot estimates to interpolate")
    if estimates.shape[-2:] != (pattern.K_p, pattern.T_p):
        raise ValueError(f"pilot estimates shape {estimates.shape} does not match pattern ({pattern.K_p}, {pattern.T_p})")
    pattern.check_fits(K, T)

    lo, hi, w = _linear_weights(pattern.subcarrier_indices, np.arange(K))
    w = w[:, None]
    along_freq = estimates[..., lo, :] * (1 - w) + estimates[..., hi, :] * w  # (..., K, T_p)

    lo, hi, w = _linear_weights(pattern.symbol_indices, np.arange(T))
    full = along_freq[..., lo] * (1 - w) + along_freq[..., hi] * w  # (..., K, T)
    return InitialEstimate(H_hat=full, source_pattern=pattern)


def equalize_hard(Y: np.ndarray, estimate, pattern: PilotPattern) -> SymbolDecisions:
    """Nearest-alphabet decision on Y/Ĥ; pilots keep their known symbols."""
    H_hat = estimate.H_hat if isinstance(estimate, InitialEstimate) else np.asarray(estimate)
    Y = np.asarray(Y)
    if Y.shape != H_hat.shape:
        raise ValueError(f"Y shape {Y.shape} != estimate shape {H_hat.shape}")

    flagged = np.abs(H_hat) < DEGENERATE_CHANNEL
    ratio = np.where(flagged, 0, Y / np.where(flagged, 1, H_hat))
    distance = np.abs(ratio[..., None] - QPSK_ALPHABET) ** 2
    # argmin picks the first minimum, i.e. the lowest alphabet index on ties
    X_hat = QPSK_ALPHABET[np.argmin(distance, axis=-1)]

    pattern.place(X_hat, pattern.pilot_symbols)
    pattern.place(flagged, False)
    return SymbolDecisions(X_hat=X_hat, alphabet=QPSK_ALPHABET.copy(), flagged=flagged)


def stage_one(Y: np.ndarray, pattern: PilotPattern, chunk: int = 256) -> Tuple[InitialEstimate, SymbolDecisions]:
    """LS → interpolation → hard decisions, chunked over a leading batch axis."""
    Y = np.asarray(Y)
    K, T = Y.shape[-2:]
    if Y.ndim == 2:
        estimate = interpolate_grid(ls_at_pilots(Y, pattern), pattern, K, T)
        return estimate, equalize_hard(Y, estimate, pattern)

    H_hat = np.empty(Y.shape, dtype=complex)
    X_hat = np.empty(Y.shape, dtype=complex)
    flagged = np.empty(Y.shape, dtype=bool)
    for start in range(0, Y.shape[0], chunk):
        part = slice(start, start + chunk)
        estimate = interpolate_grid(ls_at_pilots(Y[part], pattern), pattern, K, T)
        decisions = equalize_hard(Y[part], estimate, pattern)
        H_hat[part] = estimate.H_hat
        X_hat[part] = decisions.X_hat
        flagged[part] = decisions.flagged
    return (
        InitialEstimate(H_hat=H_hat, source_pattern=pattern),
        SymbolDecisions(X_hat=X_hat, alphabet=QPSK_ALPHABET.copy(), flagged=flagged),
    )


def symbol_error_rate(X_hat: np.ndarray, X: np.ndarray, pattern: PilotPattern) -> float:
    """Fraction of wrong hard decisions over data (non-pilot) positions."""
    X_hat = np.asarray(X_hat)
    data = ~pattern.mask(*X_hat.shape[-2:])
    errors = ~np.isclose(X_hat, np.asarray(X))
    return float(errors[..., data].mean())
