"""Synthetic data-generating processes and the replication benchmark."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import baselines, sampler
from .panel import PanelData, TreatmentSpec, build_mask

log = logging.getLogger(__name__)

DGP_KINDS = ("independent", "dependent", "weighted")
AR_COEFS = (0.6, 0.4, 0.2)
WEIGHTS = (3.0, 2.0, 1.0)


@dataclass(frozen=True)
class DgpSpec:
    kind: str = "independent"
    J: int = 5
    T0: int = 10
    T1: int = 20
    atet: float = 0.0
    seed: int = 0
    n_factors: int = 3
    rho: tuple[float, ...] = AR_COEFS
    sigma2: float = 1.0  # noise variance of the treated unit under the weighted DGP

    def __post_init__(self):
        if self.kind not in DGP_KINDS:
            raise ValueError(f"unknown DGP kind {self.kind!r}; choose from {DGP_KINDS}")
        if self.J < 2 or self.T0 < 2 or self.T1 < 1:
            raise ValueError("need J >= 2, T0 >= 2, T1 >= 1")
        if self.kind == "weighted" and self.J not in (10, 40):
            raise ValueError(
                f"weighted DGP defines the control means only for J in {{10, 40}}, got J={self.J}"
            )

    @property
    def T(self) -> int:
        return self.T0 + self.T1


@dataclass(frozen=True)
class SyntheticPanel:
    panel: PanelData
    truth: np.ndarray  # untreated outcomes y(0) at every cell


def _finish(spec: DgpSpec, truth: np.ndarray) -> SyntheticPanel:
    J, T = truth.shape
    mask = build_mask(TreatmentSpec("single-unit-block", (J - 1,), spec.T0), J, T)
    outcomes = truth + spec.atet * mask
    truth = truth.copy()
    truth.setflags(write=False)
    return SyntheticPanel(PanelData(outcomes, mask), truth)


def _rng(spec: DgpSpec, rng):
    return np.random.default_rng(spec.seed) if rng is None else rng


def gen_independent(spec: DgpSpec, rng: np.random.Generator | None = None) -> SyntheticPanel:
    rng = _rng(spec, rng)
    K = spec.n_factors
    phi = rng.standard_normal((spec.J, K))
    psi = rng.standard_normal((spec.T, K))
    u = rng.standard_normal((spec.J, spec.T))
    return _finish(spec, phi @ psi.T + u)


def ar_factors(T: int, rho, rng: np.random.Generator) -> np.ndarray:
    """T x K factors with psi[0] = eps[0] and psi[t] = rho * psi[t-1] + eps[t]."""
    rho = np.asarray(rho, dtype=float)
    eps = rng.standard_normal((T, rho.size))
    psi = np.empty_like(eps)
    psi[0] = eps[0]
    for t in range(1, T):
        psi[t] = rho * psi[t - 1] + eps[t]
    return psi


def gen_dependent(spec: DgpSpec, rng: np.random.Generator | None = None) -> SyntheticPanel:
    rng = _rng(spec, rng)
    phi = rng.standard_normal((spec.J, len(spec.rho)))
    psi = ar_factors(spec.T, spec.rho, rng)
    u = rng.standard_normal((spec.J, spec.T))
    return _finish(spec, phi @ psi.T + u)


def weighted_means(J: int) -> np.ndarray:
    """Means of the J - 1 control units for the weighted DGP."""
    head = [10.0, 20.0, 30.0, 40.0]
    if J == 10:
        return np.array(head + [15.0] * 5)
    if J == 40:
        return np.array(head + [15.0] * 6 + [25.0] * 10 + [35.0] * 10 + [45.0] * 9)
    raise ValueError(f"weighted DGP defines the control means only for J in {{10, 40}}, got J={J}")


def gen_weighted(spec: DgpSpec, rng: np.random.Generator | None = None) -> SyntheticPanel:
    rng = _rng(spec, rng)
    mu = weighted_means(spec.J)
    n = mu.size
    cov = np.full((n, n), 0.5) + 9.5 * np.eye(n)
    controls = rng.multivariate_normal(mu, cov, size=spec.T, method="cholesky").T
    alpha = np.zeros(n)
    alpha[: len(WEIGHTS)] = WEIGHTS
    treated = alpha @ controls + np.sqrt(spec.sigma2) * rng.standard_normal(spec.T)
    return _finish(spec, np.vstack([controls, treated]))


GENERATORS = {"independent": gen_independent, "dependent": gen_dependent, "weighted": gen_weighted}


def generate(spec: DgpSpec, rng: np.random.Generator | None = None) -> SyntheticPanel:
    return GENERATORS[spec.kind](spec, rng)


# -- methods -----------------------------------------------------------------

Method = Callable[[SyntheticPanel, np.random.Generator], np.ndarray]


def _scm(sp: SyntheticPanel, rng) -> np.ndarray:
    j, T0 = baselines.single_treated_block(sp.panel)
    fit = baselines.scm_fit(sp.panel, j, T0)
    pred = np.array(sp.panel.outcomes, dtype=float)
    pred[j] = baselines.scm_predict(sp.panel, fit)
    return pred


def _mcnnm(sp: SyntheticPanel, rng) -> np.ndarray:
    return baselines.mc_nnm_cv(sp.panel, rng=rng).completed


def make_bmc(cfg: sampler.SamplerConfig) -> Method:
    def _bmc(sp: SyntheticPanel, rng) -> np.ndarray:
        draws = sampler.run_mcmc(sp.panel, cfg, rng=rng)
        return sampler.posterior_mean_untreated(draws, sp.panel)

    return _bmc


def _oracle(sp: SyntheticPanel, rng) -> np.ndarray:
    return np.array(sp.truth)


def method_table(cfg: sampler.SamplerConfig | None = None) -> dict[str, Method]:
    cfg = sampler.SamplerConfig() if cfg is None else cfg
    return {"scm": _scm, "mcnnm": _mcnnm, "bmc": make_bmc(cfg), "oracle": _oracle}


NORMALIZER = "scm"


# -- benchmark ---------------------------------------------------------------


@dataclass
class BenchmarkReport:
    """Raw per-replication metrics plus the normalized summary table."""

    raw: list[dict] = field(default_factory=list)
    summary: list[dict] = field(default_factory=list)

    def row(self, kind: str, J: int, T0: int, method: str) -> dict:
        for r in self.summary:
            if (r["kind"], r["J"], r["T0"], r["method"]) == (kind, J, T0, method):
                return r
        raise KeyError((kind, J, T0, method))


def _replicate(args):
    case_idx, (kind, J, T0), r, methods, seed, T1, atet, cfg = args
    table = method_table(cfg)
    data_rng = np.random.default_rng([seed, r, case_idx])
    sp = generate(DgpSpec(kind=kind, J=J, T0=T0, T1=T1, atet=atet, seed=seed), data_rng)
    treated = sp.panel.treated
    truth = sp.truth[treated]
    out = []
    for m_idx, name in enumerate(methods):
        method_rng = np.random.default_rng([seed, r, case_idx, 1 + m_idx])
        start = time.perf_counter()
        pred = table[name](sp, method_rng)
        elapsed = time.perf_counter() - start
        err = pred[treated] - truth
        out.append({
            "kind": kind, "J": J, "T0": T0, "rep": r, "method": name,
            "mse": float(np.mean(err**2)), "mae": float(np.mean(np.abs(err))), "time": elapsed,
        })
    norm = next(o for o in out if o["method"] == NORMALIZER)
    for o in out:
        o["mse_norm"] = o["mse"] / norm["mse"] if norm["mse"] > 0 else float("nan")
        o["mae_norm"] = o["mae"] / norm["mae"] if norm["mae"] > 0 else float("nan")
    return out


def run_benchmark(cases, methods, n_reps: int, seed: int = 0, cfg: sampler.SamplerConfig | None = None,
                  T1: int = 20, atet: float = 0.0, n_jobs: int = 1, progress=None) -> BenchmarkReport:
    """Compare methods on seeded replications of each (kind, J, T0) case.

    Every replication's MSE and MAE are divided by the synthetic-control
    values of that replication before averaging.
    """
    methods = list(methods)
    if NORMALIZER not in methods:
        raise ValueError(f"methods must include the normalizer {NORMALIZER!r}")
    unknown = [m for m in methods if m not in method_table()]
    if unknown:
        raise ValueError(f"unknown methods {unknown}; available: {sorted(method_table())}")
    cfg = sampler.SamplerConfig() if cfg is None else cfg
    jobs = [
        (ci, tuple(case), r, methods, seed, T1, atet, cfg)
        for ci, case in enumerate(cases)
        for r in range(n_reps)
    ]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_replicate, jobs))
    else:
        results = []
        for job in jobs:
            results.append(_replicate(job))
            if progress:
                progress(job)
    raw = [rec for rep in results for rec in rep]
    summary = []
    for kind, J, T0 in (tuple(c) for c in cases):
        for name in methods:
            recs = [x for x in raw if (x["kind"], x["J"], x["T0"], x["method"]) == (kind, J, T0, name)]
            summary.append({
                "kind": kind, "J": J, "T0": T0, "method": name,
                "mse": float(np.mean([x["mse_norm"] for x in recs])),
                "mae": float(np.mean([x["mae_norm"] for x in recs])),
                "time": float(np.mean([x["time"] for x in recs])),
                "n_reps": len(recs),
            })
    return BenchmarkReport(raw=raw, summary=summary)


def parse_case(text: str) -> tuple[str, int, int]:
    """'independent:5:10' -> ('independent', 5, 10)."""
    try:
        kind, J, T0 = text.split(":")
        return kind, int(J), int(T0)
    except ValueError:
        raise ValueError(f"case must look like kind:J:T0, got {text!r}") from None


def with_rank(cfg: sampler.SamplerConfig, rank: int | None) -> sampler.SamplerConfig:
    return replace(cfg, rank=rank)
