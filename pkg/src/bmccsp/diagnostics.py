"""Geweke stationarity diagnostic with batch-means spectral variance."""

from __future__ import annotations

import numpy as np


class DegenerateChainError(ValueError):
    pass


def batch_means_variance(x: np.ndarray) -> float:
    """Spectral density at zero, estimated by nonoverlapping batch means.

    Uses floor(sqrt(n)) batches of equal size; trailing draws that do not
    fill a batch are dropped.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    n_batch = int(np.floor(np.sqrt(n)))
    size = n // n_batch
    if n_batch < 2 or size < 1:
        raise DegenerateChainError("segment too short for batch means")
    means = x[: n_batch * size].reshape(n_batch, size).mean(axis=1)
    return float(size * np.var(means, ddof=1))


def geweke_diagnostic(chain, frac_a: float = 0.1, frac_b: float = 0.5) -> float:
    """z-score comparing the mean of the first ``frac_a`` of a chain with the last ``frac_b``."""
    chain = np.asarray(chain, dtype=float).ravel()
    n = chain.size
    if n < 100:
        raise ValueError(f"chain too short for Geweke diagnostic (n={n} < 100)")
    if not (0 < frac_a and 0 < frac_b and frac_a + frac_b <= 1):
        raise ValueError("segment fractions must be positive and sum to at most 1")
    a = chain[: int(frac_a * n)]
    b = chain[n - int(frac_b * n):]
    s_a = batch_means_variance(a)
    s_b = batch_means_variance(b)
    if s_a <= 0 or s_b <= 0 or np.ptp(a) == 0 or np.ptp(b) == 0:
        raise DegenerateChainError("degenerate chain: zero variance segment")
    return float((a.mean() - b.mean()) / np.sqrt(s_a / a.size + s_b / b.size))
