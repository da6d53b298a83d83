"""Posterior summaries of treatment effects, loadings and eigenvalues."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .panel import PanelData
from .sampler import PosteriorDraws

DEFAULT_LEVELS = (0.7, 0.9)
DEFAULT_QUANTILES = (0.025, 0.05, 0.15, 0.5, 0.85, 0.95, 0.975)


def credible_interval(samples, level: float = 0.9) -> tuple[float, float]:
    """Equal-tailed interval.

    Quantiles interpolate linearly between order statistics placed at
    plotting positions (k - 0.5) / n, so for 1..100 the 90% interval is
    (5.5, 95.5) and for two draws the 50% interval spans them exactly.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("no samples")
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    lo, hi = np.quantile(x, [(1 - level) / 2, 1 - (1 - level) / 2], method="hazen")
    return float(lo), float(hi)


def quantiles(samples, probs) -> np.ndarray:
    return np.quantile(np.asarray(samples, dtype=float), probs, method="hazen", axis=0)


@dataclass
class PeriodRow:
    period: str
    realized: float
    counterfactual_mean: float
    bands: dict[float, tuple[float, float]]
    n_treated: int


@dataclass
class EffectSummary:
    atet_mean: float
    atet_sd: float
    atet_quantiles: dict[float, float]
    atet_intervals: dict[float, tuple[float, float]]
    per_period: list[PeriodRow] = field(default_factory=list)
    n_post: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["atet_quantiles"] = {str(k): v for k, v in self.atet_quantiles.items()}
        d["atet_intervals"] = {str(k): list(v) for k, v in self.atet_intervals.items()}
        for row in d["per_period"]:
            row["bands"] = {str(k): list(v) for k, v in row["bands"].items()}
        return d


def atet_draws(draws: PosteriorDraws, data: PanelData) -> np.ndarray:
    """Per-draw ATET: mean over treated cells of realized minus imputed outcome."""
    rows, cols = data.treated_cells
    if rows.size == 0:
        raise ValueError("no treated cells; ATET undefined")
    if draws.y_miss_draws.shape[1] != rows.size:
        raise ValueError("draws do not match the panel's treated cells")
    realized = data.outcomes[rows, cols]
    return (realized[None, :] - draws.y_miss_draws).mean(axis=1)


def period_draws(draws: PosteriorDraws, data: PanelData) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-draw counterfactual and realized averages for every period.

    In a period with treated cells the average runs over those cells; in
    other periods it runs over the ever-treated units, whose untreated
    outcomes are observed, so the band there has zero width.
    """
    rows, cols = data.treated_cells
    ever = np.flatnonzero(data.treated.any(axis=1))
    n_post = draws.n_post
    cf = np.empty((n_post, data.T))
    realized = np.empty(data.T)
    counts = np.zeros(data.T, dtype=int)
    for t in range(data.T):
        in_t = np.flatnonzero(cols == t)
        counts[t] = in_t.size
        if in_t.size:
            cf[:, t] = draws.y_miss_draws[:, in_t].mean(axis=1)
            realized[t] = data.outcomes[rows[in_t], t].mean()
        else:
            cf[:, t] = data.outcomes[ever, t].mean()
            realized[t] = cf[0, t] if n_post else data.outcomes[ever, t].mean()
    return cf, realized, counts


def atet_posterior(draws: PosteriorDraws, data: PanelData, levels=DEFAULT_LEVELS,
                   probs=DEFAULT_QUANTILES) -> EffectSummary:
    a = atet_draws(draws, data)
    cf, realized, counts = period_draws(draws, data)
    per_period = []
    for t in range(data.T):
        mean = float(cf[:, t].mean())
        bands = {}
        for lev in levels:
            lo, hi = credible_interval(cf[:, t], lev)
            # guard against rounding in the mean of identical draws
            bands[lev] = (min(lo, mean), max(hi, mean))
        per_period.append(PeriodRow(data.period_labels[t], float(realized[t]), mean, bands, int(counts[t])))
    qs = quantiles(a, probs)
    return EffectSummary(
        atet_mean=float(a.mean()),
        atet_sd=float(a.std(ddof=1)) if a.size > 1 else 0.0,
        atet_quantiles={float(p): float(q) for p, q in zip(probs, qs)},
        atet_intervals={float(lev): credible_interval(a, lev) for lev in levels},
        per_period=per_period,
        n_post=int(a.size),
    )


def eigenvalue_summary(draws: PosteriorDraws) -> np.ndarray:
    """Posterior means of the sorted singular values of Gamma, largest first."""
    eig = -np.sort(-np.asarray(draws.gamma_eig_draws, dtype=float), axis=1)
    return eig.mean(axis=0)


def loading_summary(draws: PosteriorDraws, unit: int, level: float = 0.9):
    """Per-column posterior mean and equal-tailed band of one row of Phi."""
    if draws.phi_row_draws is None:
        raise ValueError("loadings were not retained; rerun with keep_phi=True (--keep-phi)")
    rows = draws.phi_row_draws[:, unit, :]
    mean = rows.mean(axis=0)
    lo, hi = quantiles(rows, [(1 - level) / 2, 1 - (1 - level) / 2])
    return mean, lo, hi
